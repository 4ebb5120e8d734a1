import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rscran.scheme import (
    GENERALIZED_RS,
    RS1,
    RS2,
    RS_CMD,
    SCHEME_KINDS,
    TIN,
    build_scheme,
    interference_partition,
    neighborhoods,
    stream_count,
)

from conftest import make_topology


def spread_users(K, spacing_km=0.5):
    return [(spacing_km * k, 0.0) for k in range(K)]


def clustered_users(K, spacing_m=30.0):
    return [(spacing_m / 1000.0 * k, 0.0) for k in range(K)]


class TestStreamCounts:
    @pytest.mark.parametrize("K", range(1, 9))
    def test_catalogue(self, K):
        topo = make_topology(users=spread_users(K))
        expected = {TIN: K, RS_CMD: 2 * K, RS1: K * (K + 1) // 2,
                    RS2: K + 1, GENERALIZED_RS: 2 ** K - 1}
        for kind in SCHEME_KINDS:
            scheme = build_scheme(kind, topo)
            assert scheme.n_streams == expected[kind]
            assert scheme.n_streams == stream_count(kind, K)

    def test_generalized_rs_common_count(self):
        topo = make_topology(users=spread_users(4))
        scheme = build_scheme(GENERALIZED_RS, topo)
        assert scheme.n_streams == 15
        assert len(scheme.common_ids) == 11

    def test_rs1_pairs(self):
        topo = make_topology(users=spread_users(4))
        scheme = build_scheme(RS1, topo)
        assert scheme.n_streams == 10
        owners = {tuple(sorted(scheme.streams[s].owner_set)) for s in scheme.common_ids}
        assert owners == {(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)}

    def test_tin_single_user(self):
        topo = make_topology(users=[(0.1, 0.0)])
        scheme = build_scheme(TIN, topo)
        assert scheme.n_streams == 1
        assert scheme.phi[0] == ()
        assert scheme.omega[0] == frozenset()

    def test_generalized_rs_cap_refused(self):
        topo = make_topology(users=spread_users(9))
        with pytest.raises(ValueError, match="2\\^K"):
            build_scheme(GENERALIZED_RS, topo)


class TestNeighborhoods:
    def test_delta_zero_is_self_only(self):
        topo = make_topology(users=spread_users(4))
        hoods = neighborhoods(topo, 0.0)
        assert hoods == [frozenset([k]) for k in range(4)]

    def test_delta_infinite_covers_everyone(self):
        topo = make_topology(users=spread_users(4))
        hoods = neighborhoods(topo, 1e12)
        assert all(h == frozenset(range(4)) for h in hoods)

    def test_rs_cmd_decoder_sets_follow_delta(self):
        # users at 0, 30 m, 80 m: 100 m window chains all three together
        topo = make_topology(users=[(0.0, 0.0), (0.03, 0.0), (0.08, 0.0)])
        scheme = build_scheme(RS_CMD, topo, delta_m=100.0)
        common_of = {tuple(scheme.streams[s].owner_set)[0]: s for s in scheme.common_ids}
        assert scheme.streams[common_of[0]].decoder_set == frozenset({0, 1, 2})
        # user 2 is 110 m from user 0
        topo2 = make_topology(users=[(0.0, 0.0), (0.03, 0.0), (0.11, 0.0)])
        scheme2 = build_scheme(RS_CMD, topo2, delta_m=100.0)
        common_of2 = {tuple(scheme2.streams[s].owner_set)[0]: s for s in scheme2.common_ids}
        assert scheme2.streams[common_of2[0]].decoder_set == frozenset({0, 1})


class TestDecodeOrder:
    def test_own_stream_first_then_by_distance(self):
        topo = make_topology(users=[(0.0, 0.0), (0.03, 0.0), (0.08, 0.0)])
        scheme = build_scheme(RS_CMD, topo, delta_m=100.0)
        owner_of = {s: tuple(scheme.streams[s].owner_set)[0] for s in scheme.common_ids}
        order_owners = [owner_of[s] for s in scheme.phi[0]]
        assert order_owners == [0, 1, 2]
        order_owners_u1 = [owner_of[s] for s in scheme.phi[1]]
        assert order_owners_u1 == [1, 0, 2]   # 0 at 30 m, 2 at 50 m

    def test_equidistant_tie_lower_index_first(self):
        topo = make_topology(users=[(0.0, -0.05), (0.0, 0.0), (0.0, 0.05)])
        scheme = build_scheme(RS_CMD, topo, delta_m=100.0)
        owner_of = {s: tuple(scheme.streams[s].owner_set)[0] for s in scheme.common_ids}
        order_owners = [owner_of[s] for s in scheme.phi[1]]
        assert order_owners == [1, 0, 2]

    def test_single_user_order_is_own_stream(self):
        topo = make_topology(users=[(0.0, 0.0)])
        scheme = build_scheme(RS_CMD, topo)
        assert len(scheme.phi[0]) == 1
        assert scheme.phi[0][0] == scheme.common_ids[0]

    def test_larger_owner_sets_decoded_first(self):
        topo = make_topology(users=spread_users(3, spacing_km=0.01))
        scheme = build_scheme(GENERALIZED_RS, topo)
        sizes = [len(scheme.streams[s].owner_set) for s in scheme.phi[0]]
        assert sizes == sorted(sizes, reverse=True)
        assert sizes[0] == 3


class TestInterferencePartition:
    def _scheme(self):
        topo = make_topology(users=[(0.0, 0.0), (0.03, 0.0), (0.08, 0.0)])
        return build_scheme(RS_CMD, topo, delta_m=100.0)

    def test_last_has_empty_residual(self):
        scheme = self._scheme()
        last = scheme.phi[0][-1]
        cancelled, residual = interference_partition(scheme, 0, last)
        assert residual == frozenset()
        assert cancelled == frozenset(scheme.phi[0][:-1])

    def test_first_has_all_residual(self):
        scheme = self._scheme()
        first = scheme.phi[0][0]
        cancelled, residual = interference_partition(scheme, 0, first)
        assert cancelled == frozenset()
        assert len(residual) == 2

    def test_middle_splits_one_one(self):
        scheme = self._scheme()
        mid = scheme.phi[0][1]
        cancelled, residual = interference_partition(scheme, 0, mid)
        assert len(cancelled) == 1 and len(residual) == 1

    def test_partition_covers_phi(self):
        scheme = self._scheme()
        for k in range(scheme.K):
            for sid in scheme.phi[k]:
                cancelled, residual = interference_partition(scheme, k, sid)
                assert cancelled | residual | {sid} == set(scheme.phi[k])
                assert not cancelled & residual

    def test_undheard_stream_rejected(self):
        scheme = self._scheme()
        with pytest.raises(ValueError):
            interference_partition(scheme, 0, scheme.private_id(0))


@settings(max_examples=60, deadline=None)
@given(
    K=st.integers(min_value=1, max_value=6),
    kind=st.sampled_from(SCHEME_KINDS),
    seed=st.integers(min_value=0, max_value=2 ** 16),
)
def test_phi_omega_partition_property(K, kind, seed):
    rng = np.random.default_rng(seed)
    users = rng.uniform(0.0, 0.3, size=(K, 2))
    topo = make_topology(users=users)
    scheme = build_scheme(kind, topo, delta_m=float(rng.uniform(0, 300)))
    commons = set(scheme.common_ids)
    for k in range(K):
        assert set(scheme.phi[k]) | scheme.omega[k] == commons
        assert not set(scheme.phi[k]) & scheme.omega[k]
        for sid in scheme.phi[k]:
            assert k in scheme.streams[sid].decoder_set
        for sid in scheme.omega[k]:
            assert k not in scheme.streams[sid].decoder_set
        # decode positions are a bijection onto 1..|phi|
        positions = [scheme.decode_position(k, sid) for sid in scheme.phi[k]]
        assert sorted(positions) == list(range(1, len(scheme.phi[k]) + 1))

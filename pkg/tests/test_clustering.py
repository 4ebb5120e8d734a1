import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rscran.channel import LargeScaleCsi
from rscran.clustering import (
    ClusterParams,
    candidate_clusters,
    channel_quality,
    collective_quality,
    run_clustering,
)
from rscran.scheme import RS_CMD, TIN, build_scheme

from conftest import make_topology


def csi_from_quality(q_db, L=2):
    """Build a LargeScaleCsi whose per-link qualities are exactly q_db."""
    q = np.asarray(q_db, dtype=float)
    D = np.where(np.isneginf(q), 0.0, 10.0 ** (q / 20.0))
    return LargeScaleCsi(D=D, distances_km=np.ones_like(D), L=L)


class TestQuality:
    def test_one_km_reference(self):
        from rscran.channel import build_large_scale_csi
        topo = make_topology(users=((1.0, 0.0),))
        csi = build_large_scale_csi(topo)
        assert channel_quality(csi, 0, 0) == pytest.approx(-148.1, abs=1e-9)

    def test_zero_amplitude_sentinel(self):
        csi = csi_from_quality([[float("-inf")]])
        assert channel_quality(csi, 0, 0) == float("-inf")

    def test_halving_distance_gain(self):
        from rscran.channel import build_large_scale_csi
        far = build_large_scale_csi(make_topology(users=((1.0, 0.0),)))
        near = build_large_scale_csi(make_topology(users=((0.5, 0.0),)))
        gain = channel_quality(near, 0, 0) - channel_quality(far, 0, 0)
        assert gain == pytest.approx(37.6 * np.log10(2.0), abs=1e-9)

    def test_collective_singleton_equals_link(self):
        csi = csi_from_quality([[-100.0, -120.0]])
        assert collective_quality(csi, 0, {1}) == pytest.approx(-120.0)

    def test_collective_mean(self):
        csi = csi_from_quality([[-100.0, -120.0]])
        assert collective_quality(csi, 0, {0, 1}) == pytest.approx(-110.0)

    def test_collective_sentinel_propagates(self):
        csi = csi_from_quality([[-100.0, float("-inf")]])
        assert collective_quality(csi, 0, {0, 1}) == float("-inf")

    def test_collective_empty_rejected(self):
        csi = csi_from_quality([[-100.0]])
        with pytest.raises(ValueError):
            collective_quality(csi, 0, set())


class TestCandidates:
    def test_single_bs_always_candidate(self):
        csi = csi_from_quality([[-150.0]])
        assert candidate_clusters(csi, {0}, mu_db=0.0) == frozenset({0})

    def test_three_bs_window(self):
        csi = csi_from_quality([[-100.0], [-102.0], [-110.0]])
        assert candidate_clusters(csi, {0}, mu_db=3.0) == frozenset({0, 1})

    def test_mu_zero_argmax_only(self):
        csi = csi_from_quality([[-100.0], [-102.0], [-110.0]])
        assert candidate_clusters(csi, {0}, mu_db=0.0) == frozenset({0})

    def test_all_dead_links_no_candidates(self):
        csi = csi_from_quality([[float("-inf")], [float("-inf")]])
        assert candidate_clusters(csi, {0}, mu_db=10.0) == frozenset()

    @given(mu_small=st.floats(min_value=0, max_value=20),
           extra=st.floats(min_value=0, max_value=20),
           seed=st.integers(min_value=0, max_value=999))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_mu(self, mu_small, extra, seed):
        rng = np.random.default_rng(seed)
        csi = csi_from_quality(rng.uniform(-150, -90, size=(4, 3)))
        small = candidate_clusters(csi, {0, 2}, mu_small)
        large = candidate_clusters(csi, {0, 2}, mu_small + extra)
        assert small <= large


class TestRunClustering:
    def _scheme(self, K, spacing_km=0.5):
        topo = make_topology(users=[(spacing_km * k, 0.0) for k in range(K)])
        return build_scheme(TIN, topo)

    def test_zero_capacity_leaves_all_unserved(self):
        scheme = self._scheme(2)
        csi = csi_from_quality([[-100.0, -101.0], [-99.0, -100.0]])
        out = run_clustering(csi, scheme, ClusterParams(mu_db=3.0, a_max=0))
        assert all(c == frozenset() for c in out.cluster_of)
        assert all(s == frozenset() for s in out.served_by)
        assert out.unserved == frozenset(range(scheme.n_streams))

    def test_strong_diagonal_assigns_diagonally(self):
        scheme = self._scheme(2)
        # BS 0 dominates user 0, BS 1 dominates user 1; window keeps only
        # the dominant BS in each candidate set
        csi = csi_from_quality([[-90.0, -130.0], [-130.0, -90.0]])
        out = run_clustering(csi, scheme, ClusterParams(mu_db=3.0, a_max=1))
        assert out.cluster_of[0] == frozenset({0})
        assert out.cluster_of[1] == frozenset({1})
        assert out.unserved == frozenset()

    def test_overload_keeps_strongest_stream(self):
        scheme = self._scheme(2)
        csi = csi_from_quality([[-95.0, -100.0]])
        out = run_clustering(csi, scheme, ClusterParams(mu_db=10.0, a_max=1))
        assert out.cluster_of[0] == frozenset({0})
        assert out.cluster_of[1] == frozenset()
        assert out.unserved == frozenset({1})

    def test_overload_tie_drops_highest_id(self):
        scheme = self._scheme(2)
        csi = csi_from_quality([[-100.0, -100.0]])
        out = run_clustering(csi, scheme, ClusterParams(mu_db=5.0, a_max=1))
        assert out.cluster_of[0] == frozenset({0})
        assert out.unserved == frozenset({1})

    def test_clusters_grow_across_rounds(self):
        # both BSs inside the window: stream grabs the stronger one first,
        # then the other in round two
        scheme = self._scheme(1)
        csi = csi_from_quality([[-100.0], [-101.0]])
        out = run_clustering(csi, scheme, ClusterParams(mu_db=3.0, a_max=2))
        assert out.cluster_of[0] == frozenset({0, 1})

    def test_displaced_stream_falls_back_to_next_candidate(self):
        # BS 0 is best for both users but can host one stream; stream 1
        # loses the overload round there and settles for BS 1, which sits
        # outside stream 0's candidate window
        scheme = self._scheme(2)
        csi = csi_from_quality([[-95.0, -96.0], [-110.0, -97.5]])
        out = run_clustering(csi, scheme, ClusterParams(mu_db=10.0, a_max=1))
        assert out.cluster_of[0] == frozenset({0})
        assert out.cluster_of[1] == frozenset({1})

    def test_rs_cmd_common_streams_cluster_too(self):
        topo = make_topology(
            bs=((0.0, 0.0), (0.5, 0.0)),
            users=((0.02, 0.0), (0.05, 0.0)),
        )
        from rscran.channel import build_large_scale_csi
        csi = build_large_scale_csi(topo)
        scheme = build_scheme(RS_CMD, topo, delta_m=100.0)
        out = run_clustering(csi, scheme, ClusterParams(mu_db=3.0, a_max=10))
        # users sit next to BS 0; every stream lands there, BS 1 is far
        # outside the 3 dB window
        for sid in range(scheme.n_streams):
            assert out.cluster_of[sid] == frozenset({0})


@settings(max_examples=200, deadline=None)
@given(
    N=st.integers(min_value=1, max_value=5),
    K=st.integers(min_value=1, max_value=5),
    seed=st.integers(min_value=0, max_value=10 ** 6),
    mu=st.floats(min_value=0.0, max_value=40.0),
    a_max=st.integers(min_value=0, max_value=4),
)
def test_clustering_invariants_fuzz(N, K, seed, mu, a_max):
    rng = np.random.default_rng(seed)
    q = rng.uniform(-150.0, -90.0, size=(N, K))
    # occasionally kill links entirely
    q[rng.uniform(size=(N, K)) < 0.1] = float("-inf")
    csi = csi_from_quality(q)
    topo = make_topology(users=rng.uniform(0, 0.5, size=(K, 2)))
    scheme = build_scheme(RS_CMD, topo, delta_m=float(rng.uniform(0, 400)))
    params = ClusterParams(mu_db=mu, a_max=a_max)
    out = run_clustering(csi, scheme, params)
    for n in range(N):
        assert len(out.served_by[n]) <= a_max
    for s, stream in enumerate(scheme.streams):
        allowed = candidate_clusters(csi, stream.decoder_set, mu)
        assert out.cluster_of[s] <= allowed
        for n in out.cluster_of[s]:
            assert s in out.served_by[n]
    for n in range(N):
        for s in out.served_by[n]:
            assert n in out.cluster_of[s]
    assert out.unserved == frozenset(
        s for s in range(scheme.n_streams) if not out.cluster_of[s]
    )

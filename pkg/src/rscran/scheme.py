"""Stream structure of the transmission schemes.

A scheme instance lists every transmitted stream (private and common), which
users must decode each stream, and the per-user successive decoding order of
the common streams. Decode position 1 is decoded first; streams at later
positions are still undecoded interference while an earlier one is decoded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import NetworkTopology

PRIVATE = "private"
COMMON = "common"

TIN = "tin"
RS_CMD = "rs_cmd"
RS1 = "rs1"
RS2 = "rs2"
GENERALIZED_RS = "grs"

SCHEME_KINDS = (TIN, RS_CMD, RS1, RS2, GENERALIZED_RS)

DEFAULT_DELTA_M = 100.0
DEFAULT_GRS_USER_CAP = 8


@dataclass(frozen=True)
class Stream:
    """One transmitted stream.

    owner_set: users whose message parts are carried (singleton for private
    streams and for neighborhood common streams). decoder_set: users that
    must decode the stream; always contains the owners.
    """

    id: int
    kind: str
    owner_set: frozenset
    decoder_set: frozenset

    def __post_init__(self):
        if self.kind not in (PRIVATE, COMMON):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if not self.decoder_set:
            raise ValueError("decoder_set must be non-empty")
        if not self.owner_set <= self.decoder_set:
            raise ValueError("owners must decode their own stream")
        if self.kind == PRIVATE and self.decoder_set != self.owner_set:
            raise ValueError("private stream is decoded by its owner only")


@dataclass(frozen=True)
class SchemeInstance:
    """Full stream set plus per-user decoding structure.

    phi[k]: ids of the common streams user k decodes, in decode order
    (first entry decoded first). omega[k]: common streams user k never
    decodes (always treated as noise).
    """

    kind: str
    K: int
    streams: tuple
    phi: tuple      # K tuples of stream ids, ordered
    omega: tuple    # K frozensets of stream ids

    def __post_init__(self):
        for s, stream in enumerate(self.streams):
            if stream.id != s:
                raise ValueError("stream ids must equal their positions")
        common = {s.id for s in self.streams if s.kind == COMMON}
        for k in range(self.K):
            if set(self.phi[k]) | self.omega[k] != common or set(self.phi[k]) & self.omega[k]:
                raise ValueError("phi and omega must partition the common streams")

    @property
    def n_streams(self) -> int:
        return len(self.streams)

    @property
    def common_ids(self) -> tuple:
        return tuple(s.id for s in self.streams if s.kind == COMMON)

    @property
    def private_ids(self) -> tuple:
        return tuple(s.id for s in self.streams if s.kind == PRIVATE)

    def private_id(self, k: int) -> int:
        # Private streams are laid out first, one per user, in user order.
        return k

    def decode_position(self, k: int, stream_id: int) -> int:
        """1-based position of stream_id in user k's decode order."""
        return self.phi[k].index(stream_id) + 1


def stream_count(kind: str, K: int) -> int:
    """Closed-form stream count of each scheme for K users."""
    if kind == TIN:
        return K
    if kind == RS_CMD:
        return 2 * K
    if kind == RS1:
        return K * (K + 1) // 2
    if kind == RS2:
        return K + 1
    if kind == GENERALIZED_RS:
        return 2 ** K - 1
    raise ValueError(f"unknown scheme kind {kind!r}")


def neighborhoods(topology: NetworkTopology, delta_m: float) -> list:
    """M_k = users within delta meters of user k (k always included)."""
    d_m = topology.user_distances_km() * 1000.0
    return [frozenset(np.flatnonzero(d_m[:, k] <= delta_m)) for k in range(topology.K)]


def decode_order(topology: NetworkTopology, k: int, candidates: list) -> tuple:
    """Order the common streams user k decodes.

    Larger owner sets first (higher layers cancelled before lower ones);
    among equal sizes, nearest owner first (own stream has distance 0);
    remaining ties by lexicographically smallest owner set, so the order is
    total and deterministic.
    """
    d_km = topology.user_distances_km()

    def key(stream: Stream):
        owners = tuple(sorted(stream.owner_set))
        min_d = min(d_km[j, k] for j in stream.owner_set)
        return (-len(stream.owner_set), min_d, owners)

    return tuple(s.id for s in sorted(candidates, key=key))


def interference_partition(scheme: SchemeInstance, k: int, stream_id: int):
    """Split user k's other common streams around stream_id.

    Returns (cancelled, residual): ids decoded strictly before stream_id
    (already removed when it is decoded) and strictly after (still
    interfering). Together they partition phi[k] minus stream_id.
    """
    if stream_id not in scheme.phi[k]:
        raise ValueError(f"stream {stream_id} is not decoded by user {k}")
    pos = scheme.phi[k].index(stream_id)
    return frozenset(scheme.phi[k][:pos]), frozenset(scheme.phi[k][pos + 1:])


def build_scheme(
    kind: str,
    topology: NetworkTopology,
    delta_m: float = DEFAULT_DELTA_M,
    grs_user_cap: int = DEFAULT_GRS_USER_CAP,
) -> SchemeInstance:
    """Construct the stream set of a scheme for the given topology.

    Stream ids 0..K-1 are the private streams (one per user); common streams
    follow. delta only affects the neighborhood scheme (rs_cmd); the layered
    schemes decode each common stream exactly at its owner set.
    """
    if kind not in SCHEME_KINDS:
        raise ValueError(f"unknown scheme kind {kind!r}; expected one of {SCHEME_KINDS}")
    if delta_m < 0:
        raise ValueError("delta_m must be nonnegative")
    K = topology.K
    if kind == GENERALIZED_RS and K > grs_user_cap:
        raise ValueError(
            f"generalized RS needs 2^K - 1 = {2 ** K - 1} streams for K={K}; "
            f"refusing above the cap of {grs_user_cap} users"
        )

    streams = [
        Stream(id=k, kind=PRIVATE, owner_set=frozenset([k]), decoder_set=frozenset([k]))
        for k in range(K)
    ]

    def add_common(owners, decoders):
        streams.append(
            Stream(id=len(streams), kind=COMMON, owner_set=frozenset(owners),
                   decoder_set=frozenset(decoders))
        )

    if kind == RS_CMD:
        hoods = neighborhoods(topology, delta_m)
        for k in range(K):
            add_common([k], hoods[k])
    elif kind == RS1:
        for i in range(K):
            for j in range(i + 1, K):
                add_common([i, j], [i, j])
    elif kind == RS2:
        everyone = range(K)
        add_common(everyone, everyone)
    elif kind == GENERALIZED_RS:
        # One common stream per user subset of size >= 2, by size then lex.
        subsets = []
        for mask in range(1, 2 ** K):
            members = tuple(k for k in range(K) if mask >> k & 1)
            if len(members) >= 2:
                subsets.append(members)
        subsets.sort(key=lambda s: (len(s), s))
        for members in subsets:
            add_common(members, members)

    phi = []
    omega = []
    commons = [s for s in streams if s.kind == COMMON]
    for k in range(K):
        mine = [s for s in commons if k in s.decoder_set]
        phi.append(decode_order(topology, k, mine))
        omega.append(frozenset(s.id for s in commons if k not in s.decoder_set))

    expected = stream_count(kind, K)
    assert len(streams) == expected, (len(streams), expected)
    return SchemeInstance(kind=kind, K=K, streams=tuple(streams), phi=tuple(phi),
                          omega=tuple(omega))

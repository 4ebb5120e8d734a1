"""Stream-to-BS clustering with load balancing, driven by large-scale CSI only.

Each stream is served by a cluster of BSs picked from a candidate window
around the strongest BS (in collective channel quality to the stream's
decoders). Rounds alternate greedy growth with overload resolution: a BS
asked to carry more streams than its limit keeps only its strongest ones and
is then closed to further assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LargeScaleCsi
from .scheme import SchemeInstance

NEG_INF = float("-inf")

DEFAULT_MU_DB = 3.0
DEFAULT_A_MAX = 10


@dataclass(frozen=True)
class ClusterParams:
    """Candidate window width mu (dB) and per-BS stream limits."""

    mu_db: float = DEFAULT_MU_DB
    a_max: object = DEFAULT_A_MAX   # int or (N,) array

    def __post_init__(self):
        if self.mu_db < 0:
            raise ValueError("mu_db must be nonnegative")

    def a_max_array(self, N: int) -> np.ndarray:
        a = np.broadcast_to(np.asarray(self.a_max, dtype=int), (N,)).copy()
        if np.any(a < 0):
            raise ValueError("a_max must be nonnegative")
        return a


@dataclass(frozen=True)
class ServingClusters:
    """Final stream-BS assignment.

    cluster_of[s]: BS indices serving stream s (may be empty). served_by[n]:
    stream ids BS n carries. unserved: streams that ended with no BS; they
    are excluded from optimization (beamformer absent, rate zero).
    """

    cluster_of: tuple    # per stream, frozenset of BS indices
    served_by: tuple     # per BS, frozenset of stream ids
    unserved: frozenset

    @property
    def n_bs(self) -> int:
        return len(self.served_by)


def channel_quality(csi: LargeScaleCsi, n: int, j: int) -> float:
    """Per-link quality in dB: 20 log10 D. Zero gain maps to -inf so the BS
    never enters any candidate window."""
    return quality_matrix(csi)[n, j]


def quality_matrix(csi: LargeScaleCsi) -> np.ndarray:
    q = np.full(csi.D.shape, NEG_INF)
    nz = csi.D > 0
    q[nz] = 20.0 * np.log10(csi.D[nz])
    return q


def collective_quality(csi: LargeScaleCsi, n: int, decoder_set) -> float:
    """Mean quality (dB) from BS n to all users in decoder_set; -inf
    dominates, matching its role as an impossible link."""
    members = sorted(decoder_set)
    if not members:
        raise ValueError("decoder_set must be non-empty")
    q = quality_matrix(csi)[n, members]
    return NEG_INF if np.any(np.isneginf(q)) else float(np.mean(q))


def _collective_vector(csi: LargeScaleCsi, decoder_set) -> np.ndarray:
    return np.array([collective_quality(csi, n, decoder_set) for n in range(csi.N)])


def candidate_clusters(csi: LargeScaleCsi, decoder_set, mu_db: float) -> frozenset:
    """BSs within mu dB of the best collective quality for this decoder set."""
    q = _collective_vector(csi, decoder_set)
    best = np.max(q)
    if np.isneginf(best):
        return frozenset()
    return frozenset(np.flatnonzero(best - q <= mu_db))


def run_clustering(
    csi: LargeScaleCsi,
    scheme: SchemeInstance,
    params: ClusterParams,
) -> ServingClusters:
    """Greedy rounds with overload resolution.

    Per round every pooled stream grabs the strongest remaining candidate BS
    (ties to the lowest BS index); a stream whose candidates are exhausted
    leaves the pool keeping its cluster. BSs pushed past their limit then
    drop their weakest streams (ties to the highest stream id), close, and
    vanish from all candidate sets. Ends when either pool empties.
    """
    N = csi.N
    a_max = params.a_max_array(N)
    n_streams = scheme.n_streams
    quality = {}          # (stream, n) -> collective quality driving all choices
    candidates = []
    for s, stream in enumerate(scheme.streams):
        qvec = _collective_vector(csi, stream.decoder_set)
        for n in range(N):
            quality[(s, n)] = qvec[n]
        candidates.append(set(candidate_clusters(csi, stream.decoder_set, params.mu_db)))

    pool = set(range(n_streams))
    open_bs = set(range(N))
    cluster_of = [set() for _ in range(n_streams)]
    served_by = [set() for _ in range(N)]

    while pool and open_bs:
        for s in sorted(pool):
            if candidates[s]:
                # strongest candidate; ties to the lowest BS index
                n = min(candidates[s], key=lambda n: (-quality[(s, n)], n))
                cluster_of[s].add(n)
                served_by[n].add(s)
                candidates[s].discard(n)
            else:
                pool.discard(s)
        for n in sorted(open_bs):
            excess = len(served_by[n]) - a_max[n]
            if excess > 0:
                # weakest first; ties to the highest stream id
                victims = sorted(served_by[n], key=lambda s: (quality[(s, n)], -s))[:excess]
                for s in victims:
                    served_by[n].discard(s)
                    cluster_of[s].discard(n)
                open_bs.discard(n)
                for cand in candidates:
                    cand.discard(n)

    unserved = frozenset(s for s in range(n_streams) if not cluster_of[s])
    return ServingClusters(
        cluster_of=tuple(frozenset(c) for c in cluster_of),
        served_by=tuple(frozenset(c) for c in served_by),
        unserved=unserved,
    )

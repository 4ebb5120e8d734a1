"""Statistical CSI construction and Monte-Carlo channel sampling.

Large-scale fading (path loss, shadowing, antenna gain) is deterministic per
network drop and known to the optimizer; small-scale fading is drawn i.i.d.
CN(0, I) per antenna and only enters through sample averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RNG_ALGORITHM = "philox4x64:key=(seed,sample_index)"

# Free-space reference path loss model, distances in km.
_PL_INTERCEPT_DB = 148.1
_PL_SLOPE_DB = 37.6


@dataclass(frozen=True)
class NetworkTopology:
    """Static network layout and per-BS resource limits.

    Positions are in km. p_max is linear watts, fronthaul in bits/s,
    noise_psd in W/Hz. All downstream math is linear-scale; dB/dBm conversion
    happens once at the config boundary.
    """

    bs_positions: np.ndarray      # (N, 2) km
    user_positions: np.ndarray    # (K, 2) km
    L: int                        # antennas per BS
    p_max: np.ndarray             # (N,) watts
    fronthaul: np.ndarray         # (N,) bits/s
    bandwidth: float              # Hz
    noise_psd: float              # W/Hz

    def __post_init__(self):
        bs = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        users = np.atleast_2d(np.asarray(self.user_positions, dtype=float))
        object.__setattr__(self, "bs_positions", bs)
        object.__setattr__(self, "user_positions", users)
        object.__setattr__(self, "p_max", np.asarray(self.p_max, dtype=float))
        object.__setattr__(self, "fronthaul", np.asarray(self.fronthaul, dtype=float))
        if bs.ndim != 2 or bs.shape[1] != 2 or bs.shape[0] < 1:
            raise ValueError("bs_positions must be (N, 2) with N >= 1")
        if users.ndim != 2 or users.shape[1] != 2 or users.shape[0] < 1:
            raise ValueError("user_positions must be (K, 2) with K >= 1")
        if int(self.L) < 1:
            raise ValueError("L must be a positive integer")
        object.__setattr__(self, "L", int(self.L))
        if self.p_max.shape != (self.N,) or np.any(self.p_max <= 0):
            raise ValueError("p_max must be (N,) and strictly positive")
        if self.fronthaul.shape != (self.N,) or np.any(self.fronthaul < 0):
            raise ValueError("fronthaul must be (N,) and nonnegative")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.noise_psd > 0:
            raise ValueError("noise_psd must be positive")

    @property
    def N(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def K(self) -> int:
        return self.user_positions.shape[0]

    @property
    def noise_power(self) -> float:
        """Receiver noise variance sigma^2 = noise_psd * bandwidth (watts)."""
        return self.noise_psd * self.bandwidth

    def user_distances_km(self) -> np.ndarray:
        """Pairwise user-user distances, (K, K) km. No floor: these drive
        decoder-set membership, not propagation."""
        diff = self.user_positions[:, None, :] - self.user_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ShadowingConfig:
    """Log-normal shadowing gain g and fixed antenna gain s.

    sigma_db = 0 disables shadowing (g = 1 exactly).
    """

    sigma_db: float = 0.0
    antenna_gain: float = 1.0

    def __post_init__(self):
        if self.sigma_db < 0:
            raise ValueError("sigma_db must be nonnegative")
        if self.antenna_gain < 0:
            raise ValueError("antenna_gain must be nonnegative")


@dataclass(frozen=True)
class LargeScaleCsi:
    """Deterministic per-link amplitude scale D and the distances behind it.

    The aggregate channel of user k is h_k = [D[0,k] e_0; ...; D[N-1,k] e_{N-1}]
    with e_n ~ CN(0, I_L), so D[n, k]^2 is the average per-antenna link gain.
    """

    D: np.ndarray            # (N, K) linear amplitude, >= 0
    distances_km: np.ndarray  # (N, K)
    L: int

    def __post_init__(self):
        object.__setattr__(self, "D", np.asarray(self.D, dtype=float))
        object.__setattr__(self, "distances_km", np.asarray(self.distances_km, dtype=float))
        if self.D.shape != self.distances_km.shape:
            raise ValueError("D and distances_km must have matching shapes")
        if np.any(self.D < 0):
            raise ValueError("D must be nonnegative")

    @property
    def N(self) -> int:
        return self.D.shape[0]

    @property
    def K(self) -> int:
        return self.D.shape[1]


@dataclass(frozen=True)
class ChannelSampleSet:
    """Frozen i.i.d. channel realizations for sample-average estimates.

    h[m, k] is user k's aggregate channel of length N*L in sample m, laid out
    as N consecutive per-BS blocks of L antennas.
    """

    h: np.ndarray   # (M, K, N*L) complex128
    seed: int
    L: int
    algorithm: str = RNG_ALGORITHM

    @property
    def M(self) -> int:
        return self.h.shape[0]

    @property
    def K(self) -> int:
        return self.h.shape[1]


def path_loss_db(d_km):
    """Distance-dependent path loss in dB, d in km. Strictly increasing."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return _PL_INTERCEPT_DB + _PL_SLOPE_DB * np.log10(d)


def build_large_scale_csi(
    topology: NetworkTopology,
    shadowing: ShadowingConfig | None = None,
    rng: np.random.Generator | None = None,
    min_distance_km: float = 0.01,
) -> LargeScaleCsi:
    """Compute the (N, K) amplitude matrix D = 10^(-PL/20) * sqrt(g * s).

    Distances below min_distance_km are clamped to the floor rather than
    rejected, so co-located drops stay well defined. rng is only consulted
    when shadowing.sigma_db > 0.
    """
    shadowing = shadowing or ShadowingConfig()
    diff = topology.bs_positions[:, None, :] - topology.user_positions[None, :, :]
    d = np.maximum(np.linalg.norm(diff, axis=-1), min_distance_km)
    pl_db = path_loss_db(d)
    if shadowing.sigma_db > 0:
        if rng is None:
            raise ValueError("shadowing enabled but no rng supplied")
        g = 10.0 ** (rng.standard_normal(d.shape) * shadowing.sigma_db / 10.0)
    else:
        g = 1.0
    D = 10.0 ** (-pl_db / 20.0) * np.sqrt(g * shadowing.antenna_gain)
    return LargeScaleCsi(D=D, distances_km=d, L=topology.L)


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # Counter-based: one generator per sample keyed by (seed, index), so any
    # partition of [0, M) across workers reproduces the serial draw exactly.
    key = np.array([np.uint64(seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_channels(
    csi: LargeScaleCsi,
    M: int,
    seed: int,
    first_index: int = 0,
) -> ChannelSampleSet:
    """Draw M aggregate channel samples h[m, k] = blocks D[n, k] * e with
    e ~ CN(0, I_L) (real and imaginary parts each N(0, 1/2)).

    first_index offsets the per-sample keys: generating [0, M) in one call is
    bit-identical to concatenating [0, a) and [a, M) from two calls.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    N, K, L = csi.N, csi.K, csi.L
    scale = csi.D.T[:, :, None]  # (K, N, 1) broadcast over antennas
    h = np.empty((M, K, N * L), dtype=np.complex128)
    for m in range(M):
        rng = _sample_rng(seed, first_index + m)
        re = rng.standard_normal((K, N, L))
        im = rng.standard_normal((K, N, L))
        e = (re + 1j * im) * np.sqrt(0.5)
        h[m] = (scale * e).reshape(K, N * L)
    return ChannelSampleSet(h=h, seed=seed, L=L)

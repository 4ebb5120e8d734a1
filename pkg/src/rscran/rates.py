"""Per-sample SINR, MSE and rate computations, and sample-average ergodic
rate estimates.

The rate-MSE link: for receiver coefficient u and weight rho > 0, the value
(log rho - rho * e(u) + 1) / log 2 never exceeds log2(1 + SINR), with
equality at the MMSE receiver u = (w' h) / T and rho = 1 / e_mmse. Sample
averages of the bound are what the optimizer maximizes.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelSampleSet
from .scheme import SchemeInstance, interference_partition

LOG2 = float(np.log(2.0))

# Weight clamp guarding log(rho) when the MMSE error underflows at extreme
# SINR samples; inactive in ordinary operating ranges.
RHO_MIN = 1e-8
RHO_MAX = 1e12


def interferer_ids(scheme: SchemeInstance, k: int, stream_id: int | None = None) -> tuple:
    """Streams in the SINR denominator at user k.

    stream_id None: decoding the own private stream, after all of phi[k] was
    cancelled; interference is the other privates plus the never-decoded
    commons. Otherwise: decoding common stream_id, with every private stream
    still present plus the commons not yet reached in the decode order.
    """
    omega = sorted(scheme.omega[k])
    privates = list(scheme.private_ids)
    if stream_id is None:
        privates.remove(scheme.private_id(k))
        return tuple(privates + omega)
    _, residual = interference_partition(scheme, k, stream_id)
    return tuple(privates + omega + sorted(residual))


def received_powers(
    h_k: np.ndarray,
    scheme: SchemeInstance,
    w: np.ndarray,
    k: int,
    stream_id: int | None = None,
    sigma2: float = 1.0,
):
    """Signal power, interference-plus-noise I, and total T at user k for one
    channel realization h_k. w is the (n_streams, N*L) beamformer matrix."""
    sid = scheme.private_id(k) if stream_id is None else stream_id
    gains2 = np.abs(np.conj(h_k) @ w.T) ** 2
    interference = sigma2 + float(np.sum(gains2[list(interferer_ids(scheme, k, stream_id))]))
    signal = float(gains2[sid])
    return signal, interference, signal + interference


def sinr(signal_power: float, interference: float) -> float:
    if interference <= 0:
        raise ValueError("interference-plus-noise must be positive")
    return signal_power / interference


def mmse_receiver(h_k: np.ndarray, w_s: np.ndarray, T: float) -> complex:
    """Receiver coefficient minimizing the MSE: u = (w_s' h_k) / T."""
    if T <= 0:
        raise ValueError("total received power must be positive")
    return complex(np.vdot(w_s, h_k) / T)


def mmse_error(interference: float, T: float) -> float:
    """MSE at the MMSE receiver: e = I / T = 1 / (1 + SINR)."""
    if not T >= interference > 0:
        raise ValueError("need T >= I > 0")
    return interference / T


def mmse_weight(e: float):
    """Optimal MSE weight rho = 1/e, clamped for extreme samples."""
    return np.clip(1.0 / np.asarray(e, dtype=float), RHO_MIN, RHO_MAX)


def mse(u: complex, signal_inner: complex, T: float) -> float:
    """MSE of receiver coefficient u given the signal inner product
    h' w (channel conjugated) and total received power T."""
    return float(abs(u) ** 2 * T - 2.0 * np.real(u * signal_inner) + 1.0)


def wmmse_bound(u: complex, rho: float, e: float) -> float:
    """Rate lower bound (log rho - rho e + 1) / log 2 in bit/s/Hz."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return (np.log(rho) - rho * e + 1.0) / LOG2


def pair_table(scheme: SchemeInstance) -> tuple:
    """Every (stream, decoding user) pair carrying a rate constraint:
    one private pair (k, k) per user, then one pair per common stream and
    decoder, in sorted order."""
    pairs = [(scheme.private_id(k), k) for k in range(scheme.K)]
    for sid in scheme.common_ids:
        for dec in sorted(scheme.streams[sid].decoder_set):
            pairs.append((sid, dec))
    return tuple(pairs)


def link_statistics(
    scheme: SchemeInstance,
    w: np.ndarray,
    samples: ChannelSampleSet,
    sigma2: float,
):
    """Per-pair, per-sample signal inner products and interference.

    Returns (pairs, hw, I): hw[m, p] = h_dec' w_sid for pair p, and I[m, p]
    the interference-plus-noise. I is accumulated directly from interferer
    powers (never as T minus signal) so high-SINR samples stay accurate.
    """
    pairs = pair_table(scheme)
    G = np.einsum("mkn,sn->mks", np.conj(samples.h), w)
    G2 = np.abs(G) ** 2
    M = samples.M
    hw = np.empty((M, len(pairs)), dtype=np.complex128)
    I = np.empty((M, len(pairs)))
    for p, (sid, dec) in enumerate(pairs):
        if sid == scheme.private_id(dec) and scheme.streams[sid].kind == "private":
            idx = interferer_ids(scheme, dec, None)
        else:
            idx = interferer_ids(scheme, dec, sid)
        hw[:, p] = G[:, dec, sid]
        I[:, p] = sigma2 + G2[:, dec, list(idx)].sum(axis=-1)
    return pairs, hw, I


def per_sample_pair_rates(
    scheme: SchemeInstance,
    w: np.ndarray,
    samples: ChannelSampleSet,
    sigma2: float,
):
    """log2(1 + SINR) per sample and pair, shape (M, n_pairs)."""
    pairs, hw, I = link_statistics(scheme, w, samples, sigma2)
    return pairs, np.log2(1.0 + np.abs(hw) ** 2 / I)


def saa_stream_rates(
    scheme: SchemeInstance,
    w: np.ndarray,
    samples: ChannelSampleSet,
    sigma2: float,
    bandwidth: float,
) -> np.ndarray:
    """Sample-average rate per stream in bit/s.

    Private streams average their own log-rate. A common stream must be
    decodable by all its decoders in every state, so the per-sample minimum
    over decoders is averaged.
    """
    pairs, rates = per_sample_pair_rates(scheme, w, samples, sigma2)
    out = np.zeros(scheme.n_streams)
    for k in range(scheme.K):
        out[scheme.private_id(k)] = rates[:, k].mean()
    for sid in scheme.common_ids:
        cols = [p for p, (s, _) in enumerate(pairs) if s == sid]
        out[sid] = rates[:, cols].min(axis=1).mean()
    return bandwidth * out


def saa_pair_rates(
    scheme: SchemeInstance,
    w: np.ndarray,
    samples: ChannelSampleSet,
    sigma2: float,
    bandwidth: float,
) -> dict:
    """Per-(stream, decoder) sample-average rates in bit/s.

    These are the quantities the optimizer constrains (one per pair); a
    common stream's allocatable rate is the minimum over its decoders.
    """
    pairs, rates = per_sample_pair_rates(scheme, w, samples, sigma2)
    return {pair: bandwidth * rates[:, p].mean() for p, pair in enumerate(pairs)}


def saa_rate(
    scheme: SchemeInstance,
    w: np.ndarray,
    samples: ChannelSampleSet,
    k: int,
    sigma2: float,
    bandwidth: float,
):
    """(private, common) sample-average rate of user k in bit/s.

    Multi-owner common streams split their rate equally across owners, so
    summing over users always reproduces the stream total.
    """
    per_stream = saa_stream_rates(scheme, w, samples, sigma2, bandwidth)
    rc = 0.0
    for sid in scheme.common_ids:
        owners = scheme.streams[sid].owner_set
        if k in owners:
            rc += per_stream[sid] / len(owners)
    return float(per_stream[scheme.private_id(k)]), float(rc)

"""Sample-average ergodic sum-rate maximization by block coordinate ascent.

Each outer iteration refreshes the per-sample MMSE receivers and weights in
closed form, collapses them into per-pair sample averages (the aux
coefficients), and solves one convex beamformer/rate subproblem warm-started
from the previous iterate, which keeps the objective monotone up to solver
tolerance.

Internally channels are scaled by 1/sigma (unit noise) and rates carried
per-Hz; everything reported externally is bit/s.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSampleSet, NetworkTopology
from .clustering import ServingClusters
from .conic import ConicProgram, QuadBlock, SolverResult, solve
from .rates import (
    LOG2,
    interferer_ids,
    link_statistics,
    mmse_weight,
    saa_stream_rates,
)
from .scheme import SchemeInstance

POWER_MARGIN = 1e-3   # strict-interior shave applied to warm starts
# Warm-start rates are pulled this far (relative) inside their bounds: a
# start hugging the boundary jams the interior-point line search, and the
# solve recovers the gap anyway.
RATE_MARGIN = 1e-2


@dataclass(frozen=True)
class PairAux:
    """Sample-averaged coefficients of one (stream, decoder) pair.

    Y = F' F with F the weighted-row factor, so the quadratic form handed to
    the solver is positive semidefinite by construction. zero marks a pair
    with no signal energy in any sample (its rate is structurally zero).
    """

    t_bar: float
    z_bar: float
    f_bar: np.ndarray      # (N*L,) complex
    Y_factor: np.ndarray   # (rank, N*L) complex
    zero: bool


@dataclass(frozen=True)
class AuxCoefficients:
    pairs: tuple               # ((stream_id, decoder), ...)
    by_pair: dict              # pair -> PairAux
    pair_rate_bound: dict      # pair -> exact per-Hz sample-average rate at w

    def is_pinned(self, scheme: SchemeInstance, sid: int) -> bool:
        return any(self.by_pair[p].zero for p in self.pairs if p[0] == sid)


@dataclass
class BcaOptions:
    eps: float = 1e-5              # relative objective change to stop
    max_outer: int = 100
    solver_tol: float = 1e-7
    solver_max_iter: int = 200


@dataclass
class IterationRow:
    iteration: int
    esr_bps: float
    max_violation: float
    seconds: float


@dataclass
class BeamformingSolution:
    """Final beamformers, per-stream rate allocations and diagnostics."""

    w: np.ndarray               # (n_streams, N*L) complex, structural zeros exact
    stream_rates: np.ndarray    # (n_streams,) bit/s
    esr_bps: float
    saa_esr_bps: float          # per-sample-minimum estimate at the final w
    converged: bool
    iterations: int
    trace: list
    pinned_streams: frozenset
    final_duals: np.ndarray | None = None
    final_bound_duals: np.ndarray | None = None
    final_layout: object = None

    def per_user_rates(self, scheme: SchemeInstance):
        """(Rp, Rc) arrays; multi-owner common rates split equally."""
        Rp = np.array([self.stream_rates[scheme.private_id(k)] for k in range(scheme.K)])
        Rc = np.zeros(scheme.K)
        for sid in scheme.common_ids:
            owners = sorted(scheme.streams[sid].owner_set)
            for k in owners:
                Rc[k] += self.stream_rates[sid] / len(owners)
        return Rp, Rc


@dataclass(frozen=True)
class SubproblemLayout:
    """Variable bookkeeping of one convex subproblem."""

    active_streams: tuple            # stream ids with variables
    bs_of_stream: dict               # sid -> ordered tuple of serving BSs
    coord_slice: dict                # sid -> slice into the complex vector
    coord_cols: dict                 # sid -> global (N*L) column indices
    rate_index: dict                 # sid -> real-variable index
    n_complex: int
    L: int
    N: int
    constraint_pairs: tuple          # achievability constraints in order

    def pack(self, w: np.ndarray) -> np.ndarray:
        x = np.empty(self.n_complex, dtype=np.complex128)
        for sid in self.active_streams:
            x[self.coord_slice[sid]] = w[sid, self.coord_cols[sid]]
        return x

    def unpack(self, x: np.ndarray, n_streams: int) -> np.ndarray:
        w = np.zeros((n_streams, self.N * self.L), dtype=np.complex128)
        for sid in self.active_streams:
            w[sid, self.coord_cols[sid]] = x[self.coord_slice[sid]]
        return w

    def scatter_rates(self, r: np.ndarray, n_streams: int) -> np.ndarray:
        out = np.zeros(n_streams)
        for sid, j in self.rate_index.items():
            out[sid] = r[j]
        return out


def effective_clusters(clusters: ServingClusters, topology: NetworkTopology):
    """Serving clusters with zero-fronthaul BSs removed: such a BS cannot be
    handed any stream data, so its blocks are structurally zero."""
    dead = {n for n in range(topology.N) if topology.fronthaul[n] == 0.0}
    return [frozenset(c) - dead for c in clusters.cluster_of]


def update_aux(
    scheme: SchemeInstance,
    w: np.ndarray,
    samples: ChannelSampleSet,
    sigma2: float,
) -> AuxCoefficients:
    """Closed-form receiver/weight refresh collapsed to sample averages.

    Per pair and sample: u = (w' h) / T, e = I / T, rho = 1/e (clamped),
    then t = avg rho |u|^2, z = avg (1 - rho + log rho), f = avg rho u* h,
    and the weighted rows sqrt(rho |u|^2 / M) h' stacked and QR-reduced so
    the quadratic factor is sample-count independent.
    """
    pairs, hw, I = link_statistics(scheme, w, samples, sigma2)
    M = samples.M
    S = np.abs(hw) ** 2
    T = I + S
    by_pair = {}
    bounds = {}
    for p, pair in enumerate(pairs):
        sid, dec = pair
        if not np.any(S[:, p] > 0.0):
            by_pair[pair] = PairAux(
                t_bar=0.0, z_bar=0.0,
                f_bar=np.zeros(w.shape[1], dtype=np.complex128),
                Y_factor=np.zeros((0, w.shape[1]), dtype=np.complex128),
                zero=True,
            )
            bounds[pair] = 0.0
            continue
        u = np.conj(hw[:, p]) / T[:, p]
        e = I[:, p] / T[:, p]
        rho = mmse_weight(e)
        t_bar = float(np.mean(rho * np.abs(u) ** 2))
        z_bar = float(np.mean(1.0 - rho + np.log(rho)))
        h_dec = samples.h[:, dec, :]
        f_bar = (rho * np.conj(u)) @ h_dec / M
        rows = np.sqrt(rho * np.abs(u) ** 2 / M)[:, None] * np.conj(h_dec)
        if rows.shape[0] > rows.shape[1]:
            _, R = np.linalg.qr(rows, mode="reduced")
            factor = R
        else:
            factor = rows
        by_pair[pair] = PairAux(t_bar=t_bar, z_bar=z_bar, f_bar=f_bar,
                                Y_factor=factor, zero=False)
        bounds[pair] = float(np.mean(np.log2(1.0 + S[:, p] / I[:, p])))
    return AuxCoefficients(pairs=pairs, by_pair=by_pair, pair_rate_bound=bounds)


def build_subproblem(
    scheme: SchemeInstance,
    clusters: ServingClusters,
    aux: AuxCoefficients,
    topology: NetworkTopology,
):
    """Assemble the convex subproblem over the active streams.

    Constraint order: per-BS power, per-BS fronthaul (positive-capacity BSs
    only), private achievability per user, common achievability per
    (stream, decoder). Streams pinned at zero rate (unserved, fed only by
    zero-fronthaul BSs, or with a dead pair) carry no variables and no
    constraints: a pinned achievability row would force every interferer to
    zero as well. Rates are per-Hz here; nonnegativity is a variable bound,
    not a counted constraint. aux must come from unit-noise channels
    (samples scaled by 1/sigma), which is how bca_solve calls it.
    """
    eff = effective_clusters(clusters, topology)
    L, N = topology.L, topology.N
    active = [
        sid for sid in range(scheme.n_streams)
        if eff[sid] and not aux.is_pinned(scheme, sid)
    ]
    bs_of = {sid: tuple(sorted(eff[sid])) for sid in active}
    coord_slice = {}
    coord_cols = {}
    pos = 0
    for sid in active:
        width = L * len(bs_of[sid])
        coord_slice[sid] = slice(pos, pos + width)
        cols = np.concatenate([np.arange(n * L, (n + 1) * L) for n in bs_of[sid]])
        coord_cols[sid] = cols
        pos += width
    rate_index = {sid: j for j, sid in enumerate(active)}
    layout = SubproblemLayout(
        active_streams=tuple(active), bs_of_stream=bs_of, coord_slice=coord_slice,
        coord_cols=coord_cols, rate_index=rate_index, n_complex=pos, L=L, N=N,
        constraint_pairs=tuple(
            p for p in aux.pairs if p[0] in rate_index and not aux.by_pair[p].zero
        ),
    )
    prog = ConicProgram(
        n_complex=pos,
        n_real=len(active),
        obj_r=np.ones(len(active)),
    )

    # per-BS power: identity factors on every local block
    for n in range(N):
        blocks = []
        for sid in active:
            if n in bs_of[sid]:
                k = bs_of[sid].index(n)
                start = coord_slice[sid].start + k * L
                blocks.append(QuadBlock(C=np.eye(L), idx=np.arange(start, start + L)))
        prog.add_constraint(blocks=blocks, const=-float(topology.p_max[n]),
                            label=f"power[{n}]")

    # per-BS fronthaul, per-Hz
    for n in range(N):
        if topology.fronthaul[n] == 0.0:
            continue
        lin_r = np.zeros(len(active))
        for sid in active:
            if n in bs_of[sid]:
                lin_r[rate_index[sid]] = 1.0
        prog.add_constraint(lin_r=lin_r,
                            const=-float(topology.fronthaul[n] / topology.bandwidth),
                            label=f"fronthaul[{n}]")

    # achievability, one constraint per live pair
    for sid, dec in layout.constraint_pairs:
        pa = aux.by_pair[(sid, dec)]
        context = None if sid < scheme.K else sid
        quad_ids = set(interferer_ids(scheme, dec, context)) | {sid}
        blocks = []
        for j in sorted(quad_ids & set(rate_index)):
            blocks.append(QuadBlock(
                C=pa.Y_factor[:, coord_cols[j]],
                idx=np.arange(coord_slice[j].start, coord_slice[j].stop),
            ))
        lin_c = np.zeros(pos, dtype=np.complex128)
        lin_c[coord_slice[sid]] = -2.0 * pa.f_bar[coord_cols[sid]]
        lin_r = np.zeros(len(active))
        lin_r[rate_index[sid]] = LOG2
        kind = "private" if context is None else "common"
        prog.add_constraint(blocks=blocks, lin_c=lin_c, lin_r=lin_r,
                            const=pa.t_bar - pa.z_bar,
                            label=f"rate_{kind}[{sid},{dec}]")
    return prog, layout


def default_initialization(
    scheme: SchemeInstance,
    clusters: ServingClusters,
    topology: NetworkTopology,
) -> np.ndarray:
    """Feasible starting beamformers from large-scale structure alone.

    Small-scale statistics are isotropic per BS block, so no direction is
    preferred; each serving BS splits its power budget equally over its
    streams and points each block along the fixed all-ones direction, shaved
    below the budget so the start is strictly interior.
    """
    L, N = topology.L, topology.N
    eff = effective_clusters(clusters, topology)
    w = np.zeros((scheme.n_streams, N * L), dtype=np.complex128)
    load = np.zeros(N, dtype=int)
    for sid in range(scheme.n_streams):
        for n in eff[sid]:
            load[n] += 1
    direction = np.ones(L) / np.sqrt(L)
    for sid in range(scheme.n_streams):
        for n in eff[sid]:
            amp = np.sqrt((1.0 - POWER_MARGIN) * topology.p_max[n] / load[n])
            w[sid, n * L:(n + 1) * L] = amp * direction
    return w


def _strictify_power(w: np.ndarray, topology: NetworkTopology) -> np.ndarray:
    """Scale beamformers inside the power budget with a strict margin."""
    L, N = topology.L, topology.N
    w = w.copy()
    scale = 1.0
    for n in range(N):
        used = float(np.sum(np.abs(w[:, n * L:(n + 1) * L]) ** 2))
        cap = (1.0 - POWER_MARGIN) * topology.p_max[n]
        if used > cap:
            scale = min(scale, np.sqrt(cap / used))
    return w * scale


def _feasible_rates(
    scheme: SchemeInstance,
    aux: AuxCoefficients,
    layout: SubproblemLayout,
    topology: NetworkTopology,
) -> np.ndarray:
    """Strictly feasible per-Hz rates at the aux's base beamformers: the
    exact per-pair sample-average rates (which the refreshed constraints
    attain with equality) shrunk slightly, then scaled into fronthaul."""
    r = np.zeros(len(layout.active_streams))
    for sid in layout.active_streams:
        pair_vals = [aux.pair_rate_bound[p] for p in aux.pairs if p[0] == sid]
        r[layout.rate_index[sid]] = (1.0 - RATE_MARGIN) * max(min(pair_vals), 0.0)
    scale = 1.0
    for n in range(topology.N):
        if topology.fronthaul[n] == 0.0:
            continue
        load = sum(r[layout.rate_index[sid]] for sid in layout.active_streams
                   if n in layout.bs_of_stream[sid])
        cap = (1.0 - RATE_MARGIN) * topology.fronthaul[n] / topology.bandwidth
        if load > cap:
            scale = min(scale, cap / load)
    r *= scale
    return np.maximum(r, 0.0)


def map_beamformers(
    w_prev: np.ndarray,
    scheme_prev: SchemeInstance,
    scheme_new: SchemeInstance,
) -> np.ndarray:
    """Carry a solution between schemes by matching (kind, owner set);
    streams without a counterpart start at zero."""
    w = np.zeros((scheme_new.n_streams, w_prev.shape[1]), dtype=np.complex128)
    index_prev = {(s.kind, s.owner_set): s.id for s in scheme_prev.streams}
    for s in scheme_new.streams:
        j = index_prev.get((s.kind, s.owner_set))
        if j is not None:
            w[s.id] = w_prev[j]
    return w


def check_feasibility(
    w: np.ndarray,
    stream_rates_bps: np.ndarray,
    clusters: ServingClusters,
    topology: NetworkTopology,
) -> dict:
    """Absolute power excess (watts), relative fronthaul excess, and exact
    structural-zero compliance of a candidate solution."""
    L, N = topology.L, topology.N
    eff = effective_clusters(clusters, topology)
    power_excess = np.zeros(N)
    fronthaul_excess = np.zeros(N)
    for n in range(N):
        used = float(np.sum(np.abs(w[:, n * L:(n + 1) * L]) ** 2))
        power_excess[n] = max(0.0, used - topology.p_max[n])
        load = sum(float(stream_rates_bps[sid]) for sid in range(len(eff)) if n in eff[sid])
        cap = float(topology.fronthaul[n])
        fronthaul_excess[n] = max(0.0, (load - cap) / cap) if cap > 0 else \
            (np.inf if load > 0 else 0.0)
    zeros_ok = True
    for sid in range(len(eff)):
        mask = np.ones(N * L, dtype=bool)
        for n in eff[sid]:
            mask[n * L:(n + 1) * L] = False
        if np.any(w[sid, mask] != 0):
            zeros_ok = False
    return {
        "power_excess_w": power_excess,
        "fronthaul_excess_rel": fronthaul_excess,
        "structural_zeros_exact": zeros_ok,
        "max_violation": float(max(power_excess.max(initial=0.0),
                                   fronthaul_excess.max(initial=0.0))),
    }


def _zero_solution(scheme, n_cols, reason_pins):
    return BeamformingSolution(
        w=np.zeros((scheme.n_streams, n_cols), dtype=np.complex128),
        stream_rates=np.zeros(scheme.n_streams),
        esr_bps=0.0, saa_esr_bps=0.0, converged=True, iterations=0,
        trace=[], pinned_streams=frozenset(reason_pins),
    )


def bca_solve(
    scheme: SchemeInstance,
    clusters: ServingClusters,
    samples: ChannelSampleSet,
    topology: NetworkTopology,
    opts: BcaOptions | None = None,
    warm_start_w: np.ndarray | None = None,
) -> BeamformingSolution:
    """Alternate aux refreshes with convex subproblem solves until the
    objective stalls. The subproblem is warm-started from the previous
    beamformers with rates re-derived from the refreshed aux, so it is
    strictly feasible and the objective never drops beyond solver tolerance.

    warm_start_w, when given, replaces the default initialization (it is
    power-rescaled if needed; zero rows simply stay pinned).
    """
    opts = opts or BcaOptions()
    sigma2 = topology.noise_power
    samples_n = ChannelSampleSet(h=samples.h / np.sqrt(sigma2), seed=samples.seed,
                                 L=samples.L, algorithm=samples.algorithm)
    B = topology.bandwidth
    eff = effective_clusters(clusters, topology)
    n_cols = topology.N * topology.L
    if all(not c for c in eff):
        return _zero_solution(scheme, n_cols, range(scheme.n_streams))

    if warm_start_w is not None:
        w = warm_start_w.copy()
        for sid in range(scheme.n_streams):
            mask = np.ones(n_cols, dtype=bool)
            for n in eff[sid]:
                mask[n * topology.L:(n + 1) * topology.L] = False
            w[sid, mask] = 0.0
        w = _strictify_power(w, topology)
    else:
        w = default_initialization(scheme, clusters, topology)

    trace = []
    esr_prev = None
    result = None
    layout = None
    prev_point = None
    converged = False
    t0 = time.perf_counter()
    for it in range(1, opts.max_outer + 1):
        # newly pinned streams stop transmitting before the solve
        while True:
            aux = update_aux(scheme, w, samples_n, 1.0)
            dirty = [sid for sid in range(scheme.n_streams)
                     if aux.is_pinned(scheme, sid) and np.any(w[sid] != 0)]
            if not dirty:
                break
            for sid in dirty:
                w[sid] = 0.0
        prog, layout = build_subproblem(scheme, clusters, aux, topology)
        if not layout.active_streams:
            sol = _zero_solution(scheme, n_cols, range(scheme.n_streams))
            sol.trace = trace
            return sol
        init = (layout.pack(w), _feasible_rates(scheme, aux, layout, topology))
        result = solve(prog, tol=opts.solver_tol, max_iter=opts.solver_max_iter,
                       init=init)
        if result.status == "infeasible":
            raise RuntimeError(
                "convex subproblem reported infeasible despite a feasible "
                "warm start; this indicates corrupted inputs"
            )
        cand_esr = B * float(result.r.sum())
        if esr_prev is not None and cand_esr < esr_prev and prev_point is not None:
            # a degraded solve never overwrites the incumbent; the previous
            # point stays feasible for the refreshed subproblem, so the
            # trace holds flat and the loop stops
            w, rates_hz, result, layout = prev_point
            esr = esr_prev
            feas = check_feasibility(w, B * rates_hz, clusters, topology)
            trace.append(IterationRow(iteration=it, esr_bps=esr,
                                      max_violation=feas["max_violation"],
                                      seconds=time.perf_counter() - t0))
            converged = True
            break
        w = layout.unpack(result.x, scheme.n_streams)
        rates_hz = layout.scatter_rates(result.r, scheme.n_streams)
        esr = B * float(rates_hz.sum())
        prev_point = (w, rates_hz, result, layout)
        feas = check_feasibility(w, B * rates_hz, clusters, topology)
        trace.append(IterationRow(iteration=it, esr_bps=esr,
                                  max_violation=feas["max_violation"],
                                  seconds=time.perf_counter() - t0))
        if esr_prev is not None and abs(esr - esr_prev) <= opts.eps * max(abs(esr_prev), 1e-300):
            converged = True
            esr_prev = esr
            break
        esr_prev = esr

    stream_rates = B * layout.scatter_rates(result.r, scheme.n_streams)
    pinned = frozenset(sid for sid in range(scheme.n_streams)
                       if sid not in layout.rate_index)
    saa_esr = float(np.sum(saa_stream_rates(scheme, w, samples_n, 1.0, B)))
    return BeamformingSolution(
        w=w, stream_rates=stream_rates, esr_bps=float(stream_rates.sum()),
        saa_esr_bps=saa_esr, converged=converged, iterations=len(trace),
        trace=trace, pinned_streams=pinned, final_duals=result.duals,
        final_bound_duals=result.bound_duals, final_layout=layout,
    )


def kkt_residual(
    solution: BeamformingSolution,
    scheme: SchemeInstance,
    clusters: ServingClusters,
    samples: ChannelSampleSet,
    topology: NetworkTopology,
) -> float:
    """First-order stationarity plus complementarity gap at the returned
    point, against constraints rebuilt from aux refreshed at the final
    beamformers. Multipliers come from the final subproblem when available;
    a solution carrying none (e.g. a hand-built zero point) is scored with
    zero multipliers, so the residual reduces to the objective-gradient
    norm there.
    """
    sigma2 = topology.noise_power
    samples_n = ChannelSampleSet(h=samples.h / np.sqrt(sigma2), seed=samples.seed,
                                 L=samples.L, algorithm=samples.algorithm)
    aux = update_aux(scheme, solution.w, samples_n, 1.0)
    prog, layout = build_subproblem(scheme, clusters, aux, topology)
    eff = effective_clusters(clusters, topology)
    served = [sid for sid in range(scheme.n_streams) if eff[sid]]
    # stationarity over every served stream's rate coordinate plus the
    # active beamformer coordinates
    from .conic import _g_gradient, lift_program

    lifted = lift_program(prog)
    nc = prog.n_complex
    x = layout.pack(solution.w)
    r_hz = np.array([solution.stream_rates[sid] / topology.bandwidth
                     for sid in layout.active_streams])
    z = np.concatenate([x.real, x.imag, r_hz])
    grad = -lifted.c.copy()
    lam = None
    if solution.final_duals is not None and \
            solution.final_duals.size == prog.constraint_count:
        lam = solution.final_duals
    comp = 0.0
    if lam is not None:
        g = prog.constraint_values(x, r_hz)
        for j in range(prog.constraint_count):
            grad += lam[j] * _g_gradient(lifted.cons[j], z, lifted.nt)
        comp = float(np.sum(np.abs(lam * g)))
        if solution.final_bound_duals is not None and \
                solution.final_bound_duals.size == prog.n_real:
            grad[2 * nc:] -= solution.final_bound_duals
            comp += float(np.sum(np.abs(solution.final_bound_duals * r_hz)))
    stationarity = float(np.linalg.norm(grad))
    # rate coordinates of served streams the subproblem dropped still carry
    # the unit objective gradient
    n_outside = sum(1 for sid in served if sid not in layout.rate_index)
    stationarity = float(np.sqrt(stationarity ** 2 + n_outside))
    return stationarity + comp

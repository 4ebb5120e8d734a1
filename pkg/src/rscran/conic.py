"""Self-contained convex solver for the beamformer/rate subproblem.

Programs have a linear objective over complex coordinates plus nonnegative
real rate variables, and constraints of the form

    sum_b ||C_b x[idx_b]||^2 + Re(a' x) + b' r + d <= 0,

each quadratic part given in factored form (the factors come for free from
the sample-weighted channel rows, so positive semidefiniteness is
structural). The solver lifts everything to real coordinates and runs a
primal-dual interior-point iteration with strictly feasible iterates; a
phase-one pass manufactures a strictly feasible start when none is given.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 200

_MU = 10.0          # surrogate-gap reduction factor per centering
_T_GROWTH = 100.0   # cap on barrier-parameter growth per accepted step
_BETA = 0.5         # backtracking shrink
_ALPHA = 0.01       # sufficient-decrease fraction

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QuadBlock:
    """One factored quadratic term ||C x[idx]||^2 over complex coordinates."""

    C: np.ndarray      # (rows, b) complex
    idx: np.ndarray    # (b,) int indices into the complex variable vector

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=np.complex128))
        idx = np.asarray(self.idx, dtype=int)
        if C.shape[1] != idx.size:
            raise ValueError("factor width must match index count")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "idx", idx)


@dataclass(frozen=True)
class Constraint:
    """sum_b ||C_b x[idx_b]||^2 + Re(lin_c' x) + lin_r' r + const <= 0."""

    blocks: tuple
    lin_c: np.ndarray
    lin_r: np.ndarray
    const: float
    label: str = ""


@dataclass
class ConicProgram:
    """Maximize Re(obj_c' x) + obj_r' r subject to factored quadratic
    constraints and elementwise lower bounds on r.

    variable_count reports decision coordinates with each complex coordinate
    counted once; bounds are enforced internally and are not part of
    constraint_count.
    """

    n_complex: int
    n_real: int
    obj_c: np.ndarray = None
    obj_r: np.ndarray = None
    constraints: list = field(default_factory=list)
    real_lb: np.ndarray = None

    def __post_init__(self):
        if self.obj_c is None:
            self.obj_c = np.zeros(self.n_complex, dtype=np.complex128)
        if self.obj_r is None:
            self.obj_r = np.zeros(self.n_real)
        if self.real_lb is None:
            self.real_lb = np.zeros(self.n_real)
        self.obj_c = np.asarray(self.obj_c, dtype=np.complex128)
        self.obj_r = np.asarray(self.obj_r, dtype=float)
        self.real_lb = np.asarray(self.real_lb, dtype=float)
        if self.obj_c.shape != (self.n_complex,):
            raise ValueError("obj_c has wrong length")
        if self.obj_r.shape != (self.n_real,) or self.real_lb.shape != (self.n_real,):
            raise ValueError("real-variable arrays have wrong length")

    def add_constraint(self, blocks=(), lin_c=None, lin_r=None, const=0.0, label=""):
        lc = np.zeros(self.n_complex, dtype=np.complex128) if lin_c is None else \
            np.asarray(lin_c, dtype=np.complex128)
        lr = np.zeros(self.n_real) if lin_r is None else np.asarray(lin_r, dtype=float)
        if lc.shape != (self.n_complex,) or lr.shape != (self.n_real,):
            raise ValueError("linear terms have wrong length")
        self.constraints.append(
            Constraint(blocks=tuple(blocks), lin_c=lc, lin_r=lr, const=float(const),
                       label=label)
        )

    @property
    def constraint_count(self) -> int:
        return len(self.constraints)

    @property
    def variable_count(self) -> int:
        return self.n_complex + self.n_real

    def objective_value(self, x: np.ndarray, r: np.ndarray) -> float:
        return float(np.real(np.vdot(self.obj_c, x)) + self.obj_r @ r)

    def constraint_values(self, x: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Evaluate every counted constraint at (x, r); feasible iff <= 0."""
        vals = np.empty(self.constraint_count)
        for j, con in enumerate(self.constraints):
            q = sum(float(np.sum(np.abs(b.C @ x[b.idx]) ** 2)) for b in con.blocks)
            vals[j] = q + float(np.real(np.vdot(con.lin_c, x))) + con.lin_r @ r + con.const
        return vals


@dataclass
class SolverResult:
    x: np.ndarray          # complex solution
    r: np.ndarray          # real solution
    objective: float
    status: str
    kkt_residual: float
    iterations: int
    duals: np.ndarray        # one multiplier per counted constraint
    bound_duals: np.ndarray  # multipliers of the r >= lb bounds
    merit_monotone: bool = True
    debug_trace: list = field(default_factory=list)


# --- real lifting -----------------------------------------------------------

@dataclass
class _LiftedConstraint:
    blocks: list       # (lidx (2b,), Cl (2rows, 2b), gram (2b, 2b))
    q: np.ndarray      # (nt,)
    d: float
    is_bound: bool
    label: str


@dataclass
class _Lifted:
    nt: int
    n_complex: int
    n_real: int
    c: np.ndarray          # maximize c' z
    cons: list
    real_lb: np.ndarray
    labels: list


def lift_program(program: ConicProgram) -> _Lifted:
    """Real lifting: z = [Re x; Im x; r]. ||C x||^2 becomes the squared norm
    of a doubled real factor; Re(a' x) becomes a real inner product. Bounds
    r >= lb are appended as internal linear constraints."""
    nc, nr = program.n_complex, program.n_real
    nt = 2 * nc + nr
    c = np.concatenate([np.real(program.obj_c), np.imag(program.obj_c), program.obj_r])
    cons = []
    for con in program.constraints:
        blocks = []
        for b in con.blocks:
            Cr, Ci = np.real(b.C), np.imag(b.C)
            Cl = np.block([[Cr, -Ci], [Ci, Cr]])
            lidx = np.concatenate([b.idx, b.idx + nc])
            blocks.append((lidx, Cl, Cl.T @ Cl))
        q = np.concatenate([np.real(con.lin_c), np.imag(con.lin_c), con.lin_r])
        cons.append(_LiftedConstraint(blocks=blocks, q=q, d=con.const,
                                      is_bound=False, label=con.label))
    for j in range(nr):
        lb = program.real_lb[j]
        if np.isfinite(lb):
            q = np.zeros(nt)
            q[2 * nc + j] = -1.0
            cons.append(_LiftedConstraint(blocks=[], q=q, d=float(lb),
                                          is_bound=True, label=f"bound[{j}]"))
    return _Lifted(nt=nt, n_complex=nc, n_real=nr, c=c, cons=cons,
                   real_lb=program.real_lb.copy(),
                   labels=[con.label for con in program.constraints])


def unlift_program(lifted: _Lifted) -> ConicProgram:
    """Inverse of lift_program; reconstructs the complex program exactly."""
    nc, nr = lifted.n_complex, lifted.n_real
    prog = ConicProgram(
        n_complex=nc,
        n_real=nr,
        obj_c=lifted.c[:nc] + 1j * lifted.c[nc:2 * nc],
        obj_r=lifted.c[2 * nc:].copy(),
        real_lb=lifted.real_lb.copy(),
    )
    for con in lifted.cons:
        if con.is_bound:
            continue
        blocks = []
        for lidx, Cl, _ in con.blocks:
            b = lidx.size // 2
            rows = Cl.shape[0] // 2
            C = Cl[:rows, :b] + 1j * Cl[rows:, :b]
            blocks.append(QuadBlock(C=C, idx=lidx[:b]))
        prog.add_constraint(
            blocks=blocks,
            lin_c=con.q[:nc] + 1j * con.q[nc:2 * nc],
            lin_r=con.q[2 * nc:].copy(),
            const=con.d,
            label=con.label,
        )
    return prog


def _g_value(con: _LiftedConstraint, z: np.ndarray) -> float:
    v = con.q @ z + con.d
    for lidx, Cl, _ in con.blocks:
        y = Cl @ z[lidx]
        v += y @ y
    return float(v)


def _g_gradient(con: _LiftedConstraint, z: np.ndarray, nt: int) -> np.ndarray:
    grad = con.q.copy()
    for lidx, _, gram in con.blocks:
        grad[lidx] += 2.0 * (gram @ z[lidx])
    return grad


class _StackedEvaluator:
    """Every constraint value, gradient, and curvature term from stacked
    dense linear algebra.

    The quadratic blocks of one constraint act on pairwise-disjoint
    coordinates, so scattering them into one wide factor group G_i keeps
    g_i = q_i'z + d_i + ||G_i z||^2 exact; stacking the groups row-wise
    turns the per-constraint evaluation loops into single matrix products.
    """

    def __init__(self, cons, nt: int):
        m = len(cons)
        self.nt = nt
        self.Q = np.zeros((m, nt))
        self.d = np.zeros(m)
        quad_ids = []
        starts = []
        row_con = []
        total = 0
        for j, con in enumerate(cons):
            self.Q[j] = con.q
            self.d[j] = con.d
            rows_j = sum(Cl.shape[0] for _, Cl, _ in con.blocks)
            if rows_j:
                quad_ids.append(j)
                starts.append(total)
                row_con.extend([j] * rows_j)
                total += rows_j
        self.quad_ids = np.asarray(quad_ids, dtype=int)
        self.starts = np.asarray(starts, dtype=int)
        self.row_con = np.asarray(row_con, dtype=int)
        self.G = np.zeros((total, nt))
        groups = {}   # identical coordinate support -> constraint ids, grams
        r0 = 0
        for j in quad_ids:
            seen = set()
            for lidx, Cl, gram in cons[j].blocks:
                touched = set(int(i) for i in lidx)
                if seen & touched:
                    raise ValueError(
                        "quadratic blocks of one constraint must not share "
                        "coordinates")
                seen |= touched
                if Cl.shape[0]:
                    self.G[r0:r0 + Cl.shape[0], lidx] = Cl
                    r0 += Cl.shape[0]
                key = tuple(int(i) for i in lidx)
                ids, grams = groups.setdefault(key, ([], []))
                ids.append(j)
                grams.append(gram)
        # the quadratic Hessian is block-diagonal over these supports, so it
        # assembles from small lambda-weighted gram sums instead of a GEMM
        # over the full stacked factor; gradients batch the same way
        self.h_groups = []
        for key, (ids, grams) in groups.items():
            idx = np.asarray(key, dtype=int)
            ids = np.asarray(ids, dtype=int)
            self.h_groups.append((ids, np.stack(grams), np.ix_(idx, idx),
                                  idx, np.ix_(ids, idx)))

    def values(self, z: np.ndarray) -> np.ndarray:
        g = self.Q @ z + self.d
        if self.G.shape[0]:
            y = self.G @ z
            g[self.quad_ids] += np.add.reduceat(y * y, self.starts)
        return g

    def gradients(self, z: np.ndarray) -> np.ndarray:
        grads = self.Q.copy()
        for ids, grams, _, idx, scatter in self.h_groups:
            grads[scatter] += 2.0 * np.tensordot(grams, z[idx], axes=([2], [0]))
        return grads

    def quad_hessian(self, lam: np.ndarray) -> np.ndarray:
        H = np.zeros((self.nt, self.nt))
        for ids, grams, ix, _, _ in self.h_groups:
            H[ix] += 2.0 * np.tensordot(lam[ids], grams, axes=1)
        return H


# --- primal-dual iteration --------------------------------------------------

def _pd_solve(lifted, z0, tol, max_iter, debug, stop_when_interior=None):
    """Primal-dual interior-point loop from a strictly feasible z0.

    stop_when_interior: phase-one hook; called per iterate and, when it
    returns True, the loop exits early with status optimal.
    """
    cons = lifted.cons
    m = len(cons)
    c = lifted.c
    ev = _StackedEvaluator(cons, lifted.nt)
    z = z0.copy()
    g = ev.values(z)
    if np.any(g >= 0):
        raise ValueError("primal-dual solver needs a strictly feasible start")
    # capped so a start hugging one boundary cannot blow up the dual scale
    lam = np.minimum(1.0 / np.maximum(-g, 1e-8), 1e6)
    grad_f0 = -c
    obj_scale = 1.0 + float(np.linalg.norm(c))
    trace = []
    merit_ok = True
    status = STATUS_MAX_ITER
    it = 0
    t_prev = 0.0
    grads = None
    for it in range(1, max_iter + 1):
        if grads is None:
            grads = ev.gradients(z)
        eta = float(-g @ lam)
        r_dual = grad_f0 + grads.T @ lam
        if stop_when_interior is not None and stop_when_interior(z, g):
            status = STATUS_OPTIMAL
            break
        if np.linalg.norm(r_dual) <= tol * obj_scale and \
                eta <= tol * (1.0 + abs(c @ z)):
            status = STATUS_OPTIMAL
            break
        # barrier parameter grows boundedly per step and never drops, so a
        # collapsed surrogate gap cannot catapult the target onto the
        # boundary before the iterate is centered
        t_raw = _MU * m / max(eta, 1e-300)
        t = t_raw if t_prev == 0.0 else min(max(t_raw, t_prev), t_prev * _T_GROWTH)
        t_prev = t
        r_cent = -lam * g - 1.0 / t
        res_norm = float(np.hypot(np.linalg.norm(r_dual), np.linalg.norm(r_cent)))

        H = ev.quad_hessian(lam)
        H += (grads.T * (lam / -g)) @ grads
        rhs = -r_dual - grads.T @ (r_cent / g)
        dz = None
        ridge = 0.0
        for attempt in range(8):
            try:
                factor = scipy.linalg.cho_factor(
                    H + ridge * np.eye(lifted.nt), check_finite=False)
                dz = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
                if np.all(np.isfinite(dz)):
                    break
                dz = None
            except (scipy.linalg.LinAlgError, ValueError):
                pass
            ridge = max(ridge * 100.0, 1e-12 * (1.0 + np.trace(H) / lifted.nt))
        if dz is None:
            status = STATUS_MAX_ITER
            break
        dlam = (r_cent - lam * (grads @ dz)) / g

        step = 1.0
        neg = dlam < 0
        if np.any(neg):
            step = min(1.0, 0.99 * float(np.min(-lam[neg] / dlam[neg])))
        accepted = False
        for _ in range(60):
            z_new = z + step * dz
            lam_new = lam + step * dlam
            g_new = ev.values(z_new)
            if np.all(g_new < 0):
                grads_new = ev.gradients(z_new)
                r_dual_new = grad_f0 + grads_new.T @ lam_new
                r_cent_new = -lam_new * g_new - 1.0 / t
                new_norm = float(np.hypot(np.linalg.norm(r_dual_new),
                                          np.linalg.norm(r_cent_new)))
                if new_norm <= (1.0 - _ALPHA * step) * res_norm:
                    accepted = True
                    break
            step *= _BETA
        if not accepted:
            status = STATUS_MAX_ITER
            break
        if debug:
            trace.append({"iteration": it, "t": t, "step": step,
                          "residual_before": res_norm, "residual_after": new_norm})
            if new_norm > res_norm:
                merit_ok = False
        z, lam, g, grads = z_new, lam_new, g_new, grads_new
    if grads is None:
        grads = ev.gradients(z)
    r_dual = grad_f0 + grads.T @ lam
    eta = float(-g @ lam)
    kkt = float(np.linalg.norm(r_dual) / obj_scale + max(eta, 0.0))
    return z, lam, g, status, it, kkt, trace, merit_ok


def _phase_one(lifted, tol, max_iter, debug):
    """Find a strictly feasible point by relaxing every constraint with a
    shared slack and minimizing it; early exit once the slack clears zero."""
    nt = lifted.nt
    nc, nr = lifted.n_complex, lifted.n_real
    z0 = np.zeros(nt)
    finite = np.isfinite(lifted.real_lb)
    z0[2 * nc:][finite] = lifted.real_lb[finite] + 1.0
    cons_aug = []
    for con in lifted.cons:
        q = np.concatenate([con.q, [-1.0]])
        blocks = [(lidx, Cl, gram) for lidx, Cl, gram in con.blocks]
        cons_aug.append(_LiftedConstraint(blocks=blocks, q=q, d=con.d,
                                          is_bound=con.is_bound, label=con.label))
    g0 = np.array([_g_value(con, np.concatenate([z0, [0.0]])) for con in cons_aug])
    s0 = float(np.max(g0)) + 1.0
    c_aug = np.zeros(nt + 1)
    c_aug[-1] = -1.0   # maximize -s == minimize the slack
    aug = _Lifted(nt=nt + 1, n_complex=nc, n_real=nr + 1, c=c_aug,
                  cons=cons_aug, real_lb=lifted.real_lb, labels=lifted.labels)

    def hook(z_aug, g_aug):
        # g_aug includes the -s term, so the original constraints are
        # strictly met once g_aug + s clears zero with some margin
        s = z_aug[-1]
        return bool(np.max(g_aug + s) < -max(1e-10, 1e-8 * (1.0 + abs(s))))

    z_aug0 = np.concatenate([z0, [s0]])
    z_aug, lam, g_aug, status, it, kkt, trace, _ = _pd_solve(
        aug, z_aug0, tol=max(tol, 1e-9), max_iter=max_iter, debug=debug,
        stop_when_interior=hook,
    )
    s = z_aug[-1]
    g_orig = g_aug + s
    if np.max(g_orig) < 0:
        return z_aug[:-1], it
    return None, it


def solve(
    program: ConicProgram,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: tuple | None = None,
    debug: bool = False,
) -> SolverResult:
    """Solve the program to tol (relative duality gap and scaled dual
    residual). init, when given, is (x_complex, r_real) and must be strictly
    feasible; otherwise a phase-one pass constructs a start, and failure of
    that pass reports status infeasible.

    Deterministic: identical inputs produce identical iterates.
    """
    lifted = lift_program(program)
    nc, nr = program.n_complex, program.n_real
    if not lifted.cons:
        if np.linalg.norm(lifted.c) > 0:
            raise ValueError("program with no constraints and nonzero objective is unbounded")
        x = np.zeros(nc, dtype=np.complex128)
        r = np.zeros(nr)
        return SolverResult(x=x, r=r, objective=0.0, status=STATUS_OPTIMAL,
                            kkt_residual=0.0, iterations=0,
                            duals=np.zeros(0), bound_duals=np.zeros(nr))

    phase1_iters = 0
    z0 = None
    if init is not None:
        x0, r0 = init
        z0 = np.concatenate([np.real(x0), np.imag(x0), np.asarray(r0, dtype=float)])
        g0 = np.array([_g_value(con, z0) for con in lifted.cons])
        if np.any(g0 >= 0):
            z0 = None
    if z0 is None:
        z0, phase1_iters = _phase_one(lifted, tol, max_iter, debug)
        if z0 is None:
            return SolverResult(
                x=np.zeros(nc, dtype=np.complex128), r=np.zeros(nr),
                objective=float("nan"), status=STATUS_INFEASIBLE,
                kkt_residual=float("inf"), iterations=phase1_iters,
                duals=np.zeros(program.constraint_count), bound_duals=np.zeros(nr),
            )

    z, lam, g, status, iters, kkt, trace, merit_ok = _pd_solve(
        lifted, z0, tol=tol, max_iter=max_iter, debug=debug
    )
    x = z[:nc] + 1j * z[nc:2 * nc]
    r = z[2 * nc:]
    n_public = program.constraint_count
    duals = lam[:n_public].copy()
    bound_duals = np.zeros(nr)
    bounded_vars = np.flatnonzero(np.isfinite(program.real_lb))
    for offset, var in enumerate(bounded_vars):
        bound_duals[var] = lam[n_public + offset]
    return SolverResult(
        x=x, r=r, objective=program.objective_value(x, r), status=status,
        kkt_residual=kkt, iterations=iters + phase1_iters, duals=duals,
        bound_duals=bound_duals, merit_monotone=merit_ok, debug_trace=trace,
    )


# --- interchange dump -------------------------------------------------------

def dump_program(program: ConicProgram, path: str):
    """Write the program in a line-oriented text format for cross-checking:

    header lines (complex_vars, real_vars), objective vectors, real lower
    bounds, then one block per constraint: `constraint <label>` followed by
    `const`, nonzero `lin_real j v` / `lin_complex j re im` entries, and
    factored quadratics as `block idx j1 j2 ...` with one `row re im ...`
    line per factor row. All floats are repr-exact.
    """
    lines = ["# factored-qcqp interchange v1"]
    lines.append(f"complex_vars {program.n_complex}")
    lines.append(f"real_vars {program.n_real}")
    obj_c = " ".join(f"{v.real!r} {v.imag!r}" for v in program.obj_c)
    lines.append(f"objective_complex {obj_c}".rstrip())
    lines.append("objective_real " + " ".join(repr(float(v)) for v in program.obj_r))
    lines.append("real_lb " + " ".join(repr(float(v)) for v in program.real_lb))
    for con in program.constraints:
        lines.append(f"constraint {con.label}")
        lines.append(f"  const {con.const!r}")
        for j in np.flatnonzero(con.lin_r):
            lines.append(f"  lin_real {j} {float(con.lin_r[j])!r}")
        for j in np.flatnonzero(con.lin_c):
            v = con.lin_c[j]
            lines.append(f"  lin_complex {j} {v.real!r} {v.imag!r}")
        for b in con.blocks:
            lines.append("  block idx " + " ".join(str(i) for i in b.idx))
            for row in b.C:
                lines.append("  row " + " ".join(f"{v.real!r} {v.imag!r}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

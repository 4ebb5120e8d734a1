"""Independent reference implementations used only by the test suite.

Everything here deliberately takes a different route from the library code
(generic NLP solver, dense quadratic forms, brute-force sampling) so
agreement is meaningful.
"""

import numpy as np
from scipy import optimize


def _split(z, nc, nr):
    x = z[:nc] + 1j * z[nc:2 * nc]
    return x, z[2 * nc:]


def reference_solve(program, n_starts=8, seed=0, scale=1.0):
    """Best objective of a factored-QCQP found by multistart SLSQP on the
    real-lifted problem. Returns (objective, z_best)."""
    nc, nr = program.n_complex, program.n_real
    nt = 2 * nc + nr

    def neg_obj(z):
        x, r = _split(z, nc, nr)
        return -program.objective_value(x, r)

    cons = []
    for j in range(program.constraint_count):
        def make(jj):
            def fun(z):
                x, r = _split(z, nc, nr)
                return -program.constraint_values(x, r)[jj]
            return fun
        cons.append({"type": "ineq", "fun": make(j)})
    bounds = [(None, None)] * (2 * nc) + [
        (lb if np.isfinite(lb) else None, None) for lb in program.real_lb
    ]
    rng = np.random.default_rng(seed)
    best = None
    best_z = None
    for trial in range(n_starts):
        z0 = rng.standard_normal(nt) * scale if trial else np.zeros(nt)
        z0[2 * nc:] = np.abs(z0[2 * nc:]) + np.maximum(program.real_lb, 0.0)
        res = optimize.minimize(neg_obj, z0, method="SLSQP", constraints=cons,
                                bounds=bounds,
                                options={"maxiter": 400, "ftol": 1e-12})
        if not res.success:
            continue
        x, r = _split(res.x, nc, nr)
        viol = np.max(program.constraint_values(x, r), initial=0.0)
        if viol > 1e-7:
            continue
        if best is None or -res.fun > best:
            best = -res.fun
            best_z = res.x
    return best, best_z


def random_feasible_beamformer_search(p_max, nl_per_bs, clusters, evaluate, draws, seed):
    """Best value of `evaluate(w)` over random beamformers scaled to the
    per-BS power budget. clusters[s] lists the serving BSs of stream s."""
    rng = np.random.default_rng(seed)
    n_streams = len(clusters)
    n_bs = len(p_max)
    best = -np.inf
    for _ in range(draws):
        w = np.zeros((n_streams, n_bs * nl_per_bs), dtype=np.complex128)
        for s, cluster in enumerate(clusters):
            for n in cluster:
                sl = slice(n * nl_per_bs, (n + 1) * nl_per_bs)
                w[s, sl] = rng.standard_normal(nl_per_bs) + 1j * rng.standard_normal(nl_per_bs)
        # scale to satisfy every BS power budget with a common factor
        scale = np.inf
        for n in range(n_bs):
            sl = slice(n * nl_per_bs, (n + 1) * nl_per_bs)
            used = np.sum(np.abs(w[:, sl]) ** 2)
            if used > 0:
                scale = min(scale, np.sqrt(p_max[n] / used))
        if np.isfinite(scale):
            w *= scale * np.sqrt(rng.uniform(0.25, 1.0))
        val = evaluate(w)
        if val > best:
            best = val
    return best

"""Experiment harness: seeded network drops, per-scheme solves, CSV/JSON output.

A run takes a config file describing the network ensemble, generates `drops`
independent realizations (base stations on a hexagonal-like grid inside a
square, users uniform), solves every configured scheme per drop, and writes:

    results.csv            one row per (drop, scheme)
    result.json            full nested record with seeds, versions, aggregates
    trace/<drop>_<scheme>.csv   per-iteration objective traces

Drops run in a worker pool; every drop derives its own seeds from the master
seed via SeedSequence spawning, and rows are sorted before writing, so the
parallelism level never changes the output bytes (the wall-clock `seconds`
column aside).
"""

from __future__ import annotations

import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .channel import (
    NetworkTopology,
    ShadowingConfig,
    build_large_scale_csi,
    sample_channels,
)
from .clustering import ClusterParams, run_clustering
from .optimizer import BcaOptions, bca_solve, check_feasibility, map_beamformers
from .scheme import SCHEME_KINDS, build_scheme, stream_count

SCHEMA_VERSION = 1
RESULT_COLUMNS = ("drop", "scheme", "axis_value", "esr_bps", "mean_Rp",
                  "mean_Rc", "iterations", "seconds")
SWEEP_AXES = ("users", "bs", "fronthaul")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated run description; all physical values in linear SI units."""

    schema_version: int
    area_km: float
    bs_count: int
    user_count: int
    antennas: int
    p_max_w: float
    fronthaul_bps: float
    bandwidth_hz: float
    noise_psd_w_hz: float
    shadowing_sigma_db: float
    schemes: tuple
    delta_m: float
    grs_user_cap: int
    mu_db: float
    a_max: int
    sample_count: int
    drops: int
    master_seed: int
    eps: float
    max_outer: int
    solver_tol: float
    solver_max_iter: int
    warm_start_from_tin: bool

    def bca_options(self) -> BcaOptions:
        return BcaOptions(eps=self.eps, max_outer=self.max_outer,
                          solver_tol=self.solver_tol,
                          solver_max_iter=self.solver_max_iter)

    def cluster_params(self) -> ClusterParams:
        return ClusterParams(mu_db=self.mu_db, a_max=self.a_max)


class ConfigError(ValueError):
    pass


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing config field: {where}.{key}")
    return section[key]


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    topo = _need(raw, "topology", "")
    radio = _need(raw, "radio", "")
    sampling = _need(raw, "sampling", "")
    solver = raw.get("solver", {})
    scheme_params = raw.get("scheme_params", {})
    clustering = raw.get("clustering", {})
    schemes = tuple(_need(raw, "schemes", ""))
    if not schemes:
        raise ConfigError("schemes list must not be empty")
    for kind in schemes:
        if kind not in SCHEME_KINDS:
            raise ConfigError(
                f"unknown scheme {kind!r}; valid: {sorted(SCHEME_KINDS)}")
    cfg = ExperimentConfig(
        schema_version=version,
        area_km=float(topo.get("area_km", 2.0)),
        bs_count=int(_need(topo, "bs_count", "topology")),
        user_count=int(_need(topo, "user_count", "topology")),
        antennas=int(topo.get("antennas", 2)),
        p_max_w=dbm_to_watt(float(radio.get("p_max_dbm", 20.0))),
        fronthaul_bps=float(radio.get("fronthaul_mbps", 200.0)) * 1e6,
        bandwidth_hz=float(radio.get("bandwidth_hz", 1e7)),
        noise_psd_w_hz=dbm_to_watt(float(radio.get("noise_psd_dbm_hz", -169.0))),
        shadowing_sigma_db=float(radio.get("shadowing_sigma_db", 0.0)),
        schemes=schemes,
        delta_m=float(scheme_params.get("delta_m", 100.0)),
        grs_user_cap=int(scheme_params.get("grs_user_cap", 8)),
        mu_db=float(clustering.get("mu_db", 3.0)),
        a_max=int(clustering.get("a_max", 10)),
        sample_count=int(_need(sampling, "count", "sampling")),
        drops=int(_need(sampling, "drops", "sampling")),
        master_seed=int(sampling.get("master_seed", 0)),
        eps=float(solver.get("eps", 1e-5)),
        max_outer=int(solver.get("max_outer", 100)),
        solver_tol=float(solver.get("solver_tol", 1e-7)),
        solver_max_iter=int(solver.get("solver_max_iter", 200)),
        warm_start_from_tin=bool(solver.get("warm_start_from_tin", True)),
    )
    for name in ("area_km", "bandwidth_hz", "p_max_w"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    for name in ("bs_count", "user_count", "antennas", "sample_count", "drops"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be at least 1")
    if cfg.fronthaul_bps < 0 or cfg.noise_psd_w_hz <= 0:
        raise ConfigError("radio limits out of range")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return parse_config(raw)


# --- drop geometry -----------------------------------------------------------


def hex_grid_positions(count: int, area_km: float) -> tuple:
    """count points of a triangular lattice, chosen nearest the square's
    center and recentred inside [0, area]^2."""
    if count == 1:
        return ((area_km / 2.0, area_km / 2.0),)
    pitch = area_km / (math.ceil(math.sqrt(count)) + 1.0)
    span = math.ceil(math.sqrt(count)) + 2
    pts = []
    for i in range(-span, span + 1):
        for j in range(-span, span + 1):
            x = pitch * (j + 0.5 * (i & 1))
            y = pitch * i * math.sqrt(3.0) / 2.0
            pts.append((x, y))
    pts.sort(key=lambda p: (round(p[0] ** 2 + p[1] ** 2, 12), p[0], p[1]))
    chosen = np.array(pts[:count])
    chosen -= chosen.mean(axis=0)
    chosen += area_km / 2.0
    chosen = np.clip(chosen, 0.02 * area_km, 0.98 * area_km)
    return tuple(tuple(p) for p in chosen)


def drop_seeds(master_seed: int, drop_index: int) -> tuple:
    """(user_seed, shadowing_seed, channel_seed) for one drop, derived by
    SeedSequence spawning so drops are independent and order-free."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(drop_index,))
    state = ss.generate_state(3, dtype=np.uint64)
    return int(state[0]), int(state[1]), int(state[2])


def drop_topology(cfg: ExperimentConfig, drop_index: int) -> NetworkTopology:
    user_seed, _, _ = drop_seeds(cfg.master_seed, drop_index)
    rng = np.random.default_rng(user_seed)
    users = rng.uniform(0.0, cfg.area_km, size=(cfg.user_count, 2))
    return NetworkTopology(
        bs_positions=hex_grid_positions(cfg.bs_count, cfg.area_km),
        user_positions=tuple(tuple(u) for u in users),
        L=cfg.antennas,
        p_max=(cfg.p_max_w,) * cfg.bs_count,
        fronthaul=(cfg.fronthaul_bps,) * cfg.bs_count,
        bandwidth=cfg.bandwidth_hz,
        noise_psd=cfg.noise_psd_w_hz,
    )


# --- one drop ----------------------------------------------------------------


def run_drop(cfg: ExperimentConfig, drop_index: int) -> dict:
    """Solve every configured scheme on one network realization."""
    user_seed, shadow_seed, channel_seed = drop_seeds(cfg.master_seed, drop_index)
    topology = drop_topology(cfg, drop_index)
    shadowing = None
    shadow_rng = None
    if cfg.shadowing_sigma_db > 0:
        shadowing = ShadowingConfig(sigma_db=cfg.shadowing_sigma_db)
        shadow_rng = np.random.default_rng(shadow_seed)
    csi = build_large_scale_csi(topology, shadowing=shadowing, rng=shadow_rng)
    samples = sample_channels(csi, cfg.sample_count, seed=channel_seed)
    order = list(cfg.schemes)
    if cfg.warm_start_from_tin and "tin" in order:
        order.remove("tin")
        order.insert(0, "tin")
    tin_solution = None
    tin_scheme = None
    schemes_out = {}
    for kind in order:
        scheme = build_scheme(kind, topology, delta_m=cfg.delta_m,
                              grs_user_cap=cfg.grs_user_cap)
        clusters = run_clustering(csi, scheme, cfg.cluster_params())
        warm = None
        if cfg.warm_start_from_tin and kind != "tin" and tin_solution is not None:
            warm = map_beamformers(tin_solution.w, tin_scheme, scheme)
        t0 = time.perf_counter()
        sol = bca_solve(scheme, clusters, samples, topology,
                        opts=cfg.bca_options(), warm_start_w=warm)
        seconds = time.perf_counter() - t0
        if kind == "tin":
            tin_solution, tin_scheme = sol, scheme
        Rp, Rc = sol.per_user_rates(scheme)
        feas = check_feasibility(sol.w, sol.stream_rates, clusters, topology)
        sizes = [len(c) for c in clusters.cluster_of]
        schemes_out[kind] = {
            "esr_bps": sol.esr_bps,
            "saa_esr_bps": sol.saa_esr_bps,
            "per_user_private_bps": [float(v) for v in Rp],
            "per_user_common_bps": [float(v) for v in Rc],
            "iterations": sol.iterations,
            "converged": sol.converged,
            "seconds": seconds,
            "max_violation": feas["max_violation"],
            "structural_zeros_exact": feas["structural_zeros_exact"],
            "clusters": {
                "sizes": sizes,
                "unserved": sorted(clusters.unserved),
                "mean_size": float(np.mean(sizes)) if sizes else 0.0,
            },
            "trace": [
                {"iteration": row.iteration, "esr_bps": row.esr_bps,
                 "max_violation": row.max_violation, "seconds": row.seconds}
                for row in sol.trace
            ],
        }
    return {
        "drop": drop_index,
        "seeds": {"users": user_seed, "shadowing": shadow_seed,
                  "channels": channel_seed},
        "schemes": schemes_out,
    }


def _run_drop_task(args):
    cfg, drop_index = args
    try:
        return drop_index, run_drop(cfg, drop_index), None
    except Exception as exc:  # per-drop failures are recorded, not fatal
        return drop_index, None, f"{type(exc).__name__}: {exc}"


# --- experiment and sweep ----------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    failures: list
    rows: list

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / max(self.config.drops, 1)


def _rows_from_record(cfg: ExperimentConfig, record: dict, axis_value) -> list:
    rows = []
    for kind in cfg.schemes:
        if kind not in record["schemes"]:
            continue
        data = record["schemes"][kind]
        rows.append({
            "drop": record["drop"],
            "scheme": kind,
            "axis_value": axis_value,
            "esr_bps": data["esr_bps"],
            "mean_Rp": float(np.mean(data["per_user_private_bps"])),
            "mean_Rc": float(np.mean(data["per_user_common_bps"])),
            "iterations": data["iterations"],
            "seconds": data["seconds"],
        })
    return rows


def run_experiment(cfg: ExperimentConfig, parallel: int = 1,
                   axis_value="") -> ExperimentResult:
    tasks = [(cfg, i) for i in range(cfg.drops)]
    outcomes = []
    if parallel > 1 and cfg.drops > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(_run_drop_task, tasks))
    else:
        outcomes = [_run_drop_task(t) for t in tasks]
    records, failures = [], []
    for drop_index, record, error in outcomes:
        if error is None:
            records.append(record)
        else:
            failures.append({"drop": drop_index, "error": error})
    records.sort(key=lambda r: r["drop"])
    failures.sort(key=lambda f: f["drop"])
    rows = []
    for record in records:
        rows.extend(_rows_from_record(cfg, record, axis_value))
    return ExperimentResult(config=cfg, records=records, failures=failures,
                           rows=rows)


def sweep_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "users":
        return replace(cfg, user_count=int(value))
    if axis == "bs":
        return replace(cfg, bs_count=int(value))
    if axis == "fronthaul":
        return replace(cfg, fronthaul_bps=float(value) * 1e6)
    raise ConfigError(f"unknown sweep axis {axis!r}; valid: {SWEEP_AXES}")


def run_sweep(cfg: ExperimentConfig, axis: str, values, parallel: int = 1):
    """One experiment per axis value; rows carry the value in axis_value.

    Returns (results, stream_count_rows); the latter tabulates the stream
    count each scheme uses at each axis value.
    """
    results = []
    stream_rows = []
    for value in values:
        sub = sweep_config(cfg, axis, value)
        results.append(run_experiment(sub, parallel=parallel, axis_value=value))
        for kind in cfg.schemes:
            stream_rows.append({
                "scheme": kind,
                "axis_value": value,
                "streams": stream_count(kind, sub.user_count),
            })
    return results, stream_rows


# --- writers -----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])


def write_stream_counts_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "axis_value", "streams"])
        for row in rows:
            writer.writerow([row["scheme"], _fmt(row["axis_value"]),
                             row["streams"]])


def write_traces(records, out_dir):
    trace_dir = Path(out_dir) / "trace"
    trace_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        for kind, data in record["schemes"].items():
            path = trace_dir / f"{record['drop']}_{kind}.csv"
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["iteration", "esr_bps", "max_violation",
                                 "seconds"])
                for row in data["trace"]:
                    writer.writerow([row["iteration"], _fmt(row["esr_bps"]),
                                     _fmt(row["max_violation"]),
                                     _fmt(row["seconds"])])


def aggregates(results) -> dict:
    by_scheme = {}
    for result in results:
        for row in result.rows:
            by_scheme.setdefault(row["scheme"], []).append(row["esr_bps"])
    out = {}
    for kind, vals in by_scheme.items():
        arr = np.array(vals)
        out[kind] = {
            "mean_esr_bps": float(arr.mean()),
            "stderr_esr_bps": float(arr.std(ddof=1) / np.sqrt(arr.size))
            if arr.size > 1 else 0.0,
            "drops": int(arr.size),
        }
    return out


def write_result_json(cfg: ExperimentConfig, results, path, extra=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(cfg),
        "aggregates": aggregates(results),
        "drops": [r for result in results for r in result.records],
        "failures": [f for result in results for f in result.failures],
        "versions": {
            "package": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_experiment_outputs(cfg, results, out_dir, stream_rows=None,
                             extra=None):
    out_dir = Path(out_dir)
    rows = [row for result in results for row in result.rows]
    rows.sort(key=lambda r: (str(r["axis_value"]), r["drop"],
                             cfg.schemes.index(r["scheme"])))
    write_results_csv(rows, out_dir / "results.csv")
    write_result_json(cfg, results, out_dir / "result.json", extra=extra)
    write_traces([rec for result in results for rec in result.records], out_dir)
    if stream_rows is not None:
        write_stream_counts_csv(stream_rows, out_dir / "stream_counts.csv")


# --- built-in validation suites ---------------------------------------------


def validate_suite(name: str) -> list:
    """Curated self-checks runnable from an installed package; returns
    [(check_name, passed, detail)] without touching the test sources."""
    checks = []
    if name == "oracle":
        from scipy import special

        from .channel import path_loss_db

        pl = path_loss_db(1.0)
        checks.append(("path_loss_at_1km", abs(pl - 148.1) < 1e-12,
                       f"{pl:.6f} dB"))
        # unit-SNR Rayleigh ergodic rate against the closed integral
        ref = float(np.e * special.exp1(1.0) / np.log(2.0))
        rng = np.random.default_rng(7)
        x = (rng.standard_normal(200000) ** 2 + rng.standard_normal(200000) ** 2) / 2
        est = float(np.mean(np.log2(1.0 + x)))
        checks.append(("ergodic_rayleigh_unit_snr",
                       abs(est - ref) / ref < 0.02, f"{est:.4f} vs {ref:.4f}"))
        top = make_reference_topology()
        csi = build_large_scale_csi(top)
        scheme = build_scheme("tin", top)
        samples1 = sample_channels(csi, 1, seed=5)
        clusters = run_clustering(csi, scheme, ClusterParams())
        sol = bca_solve(scheme, clusters, samples1, top)
        closed = top.bandwidth * np.log2(
            1 + top.p_max[0] * abs(samples1.h[0, 0, 0]) ** 2 / top.noise_power)
        checks.append(("scalar_closed_form",
                       abs(sol.esr_bps - closed) / closed < 1e-6,
                       f"{sol.esr_bps:.1f} vs {closed:.1f}"))
    elif name == "invariants":
        for K in (1, 2, 4):
            expected = {"tin": K, "rs_cmd": 2 * K, "rs1": K * (K + 1) // 2,
                        "rs2": K + 1, "grs": 2 ** K - 1}
            ok = all(stream_count(k, K) == v for k, v in expected.items())
            checks.append((f"stream_catalogue_K{K}", ok, str(expected)))
        top = make_reference_topology()
        csi = build_large_scale_csi(top)
        samples = sample_channels(csi, 5, seed=9)
        scheme = build_scheme("tin", top)
        clusters = run_clustering(csi, scheme, ClusterParams())
        sol = bca_solve(scheme, clusters, samples, top)
        es = [row.esr_bps for row in sol.trace]
        mono = all(b >= a - 1e-6 * max(a, 1.0) for a, b in zip(es, es[1:]))
        checks.append(("bca_trace_monotone", mono,
                       f"{len(es)} iterations"))
        feas = check_feasibility(sol.w, sol.stream_rates, clusters, top)
        checks.append(("solution_feasible", feas["max_violation"] <= 1e-6,
                       f"max violation {feas['max_violation']:.2e}"))
    else:
        raise ConfigError(f"unknown validation suite {name!r}; "
                          "valid: oracle, invariants")
    return checks


def make_reference_topology() -> NetworkTopology:
    return NetworkTopology(
        bs_positions=((0.0, 0.0),), user_positions=((0.5, 0.0),), L=1,
        p_max=(dbm_to_watt(20.0),), fronthaul=(200e6,), bandwidth=1e7,
        noise_psd=dbm_to_watt(-169.0),
    )

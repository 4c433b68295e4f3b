"""Command-line driver: ``inelastic1d --config run.cfg --out results/``.

Each mode writes its artifacts into the output directory:

``moments.csv``
    ``time,M0,M1abs,M2,M3,M4,momentum,residual`` (particle modes leave the
    residual column empty).
``profile.csv``
    ``xi,g``; for grid modes the final field at cell centres and per-cell
    Gauss nodes, for particle modes a histogram density at bin centres.
    Steady runs at γ = 0 add a ``reference`` column with the exact profile.
``summary.json``
    Final moments, fitted exponents, bound reports, timings, the config
    echo (``config_text`` re-parses to the same configuration) and the
    package version.

Exit codes: 0 success, 1 configuration error, 2 numerical blow-up,
3 step limit reached, 4 I/O error, 5 a check in ``checks`` mode failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import (
    check_rescaled_bounds,
    decay_upper_series,
    fit_lower_constant,
    haff_fit,
)
from .config import RunConfig, load_config, parse_config
from .core import DGField, Grid, ModelParams, default_quadrature, eval_field, gauss_legendre, project_initial
from .errors import ConfigError, InsufficientDataError, MaxStepsExceededError, NumericalBlowupError
from .inequalities import run_inequality_suite
from .operators import build_workspace
from .particle import (
    DsmcConfig,
    ParticleEnsemble,
    gaussian,
    perturb_ensemble,
    rescaled_dsmc,
    run_dsmc,
    stability_constant,
    stability_experiment,
    uniform_box,
)
from .timestepping import integrate_transient, solve_steady

__all__ = ["build_problem", "run", "main", "initial_profile", "m1_profile", "EXIT_CODES"]

log = logging.getLogger("inelastic1d")

EXIT_CODES = {"ok": 0, "config": 1, "blowup": 2, "max_steps": 3, "io": 4, "check_failed": 5}
MOMENT_COLUMNS = ("time", "M0", "M1abs", "M2", "M3", "M4", "momentum", "residual")
SQRT3 = math.sqrt(3.0)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# initial data

def m1_profile(xi):
    """Steady profile of the γ = 0 rescaled equation, ``(2/π)(1 + ξ²)^{-2}``."""
    xi = np.asarray(xi, dtype=float)
    return 2.0 / np.pi / (1.0 + xi * xi) ** 2


def _m1_cdf(x):
    return 0.5 + (np.arctan(x) + x / (1.0 + x * x)) / np.pi


def _read_table(path):
    data = np.loadtxt(path, delimiter="," if str(path).endswith(".csv") else None, ndmin=2,
                      comments="#", skiprows=_header_rows(path))
    if data.shape[1] < 2:
        raise ConfigError(f"initial file {path} needs two columns xi,g", key="initial_file")
    order = np.argsort(data[:, 0])
    return data[order, 0], data[order, 1]


def _header_rows(path):
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.replace(",", " ").split()]
        return 0
    except ValueError:
        return 1


def initial_profile(config: RunConfig):
    """``(profile, breakpoints)`` for the configured preset."""
    if config.initial == "uniform-box":
        return (lambda x: (np.abs(x) <= SQRT3) / (2.0 * SQRT3)), (-SQRT3, SQRT3)
    if config.initial == "gaussian":
        return (lambda x: np.exp(-0.5 * np.asarray(x) ** 2) / math.sqrt(2 * math.pi)), ()
    if config.initial == "m1":
        return m1_profile, ()
    xs, gs = _read_table(config.initial_file)
    return (lambda x: np.interp(x, xs, gs, left=0.0, right=0.0)), tuple(xs)


def initial_sampler(config: RunConfig):
    """``sampler(n, rng) -> positions`` for the particle modes."""
    if config.initial == "uniform-box":
        return uniform_box
    if config.initial == "gaussian":
        return gaussian
    if config.initial == "m1":
        grid = np.linspace(-1e3, 1e3, 400_001)
        cdf = _m1_cdf(grid)
    else:
        xs, gs = _read_table(config.initial_file)
        grid = xs
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (gs[1:] + gs[:-1]) * np.diff(xs))])
        cdf /= cdf[-1]

    def sample(n, rng):
        u = (np.arange(n) + rng.random(n)) / n
        x = np.interp(u, cdf, grid)
        return x - x.mean()

    return sample


# ---------------------------------------------------------------------------

def model_params(config: RunConfig) -> ModelParams:
    return ModelParams(config.gamma, config.a, config.drift_coeff)


def build_problem(config: RunConfig):
    """Initial field, model parameters and collision workspace for grid modes."""
    params = model_params(config)
    grid = Grid(config.L, config.N)
    quad = gauss_legendre(config.quad_order) if config.quad_order else None
    profile, cuts = initial_profile(config)
    field = project_initial(profile, grid, config.k, quad, breakpoints=cuts)
    ws = build_workspace(grid, config.k, quad, params)
    return field, params, ws


def _write_moments(path: Path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOMENT_COLUMNS)
        for r in records:
            m = r.moments
            w.writerow([_fmt(r.time), _fmt(m.get(0.0)), _fmt(m.get(1.0)), _fmt(m.get(2.0)), _fmt(m.get(3.0)),
                        _fmt(m.get(4.0)), _fmt(r.momentum), _fmt(r.residual)])


def _profile_points(field: DGField):
    grid = field.grid
    nodes = default_quadrature(field.degree).nodes
    pts = np.concatenate([grid.centers[:, None], grid.centers[:, None] + 0.5 * grid.dx * nodes[None, :]], axis=1)
    cells = np.repeat(np.arange(grid.n_cells), pts.shape[1])
    pts = pts.ravel()
    order = np.lexsort((pts, cells))
    return pts[order], cells[order]


def _write_profile(path: Path, field: DGField, reference=None):
    """``xi,g`` rows; with ``reference`` (a callable) an extra column of its values."""
    xs, cells = _profile_points(field)
    # evaluate cell by cell so that no point needs an edge-trace choice
    s = field.grid.to_reference(xs, cells)
    from .core import legendre_values

    g = np.einsum("pm,pm->p", legendre_values(s, field.degree), field.coeffs[cells])
    keep = np.concatenate([[True], np.diff(xs) > 0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if reference is None:
            w.writerow(("xi", "g"))
            for x, v in zip(xs[keep], g[keep]):
                w.writerow((_fmt(x), _fmt(v)))
        else:
            w.writerow(("xi", "g", "reference"))
            for x, v, r in zip(xs[keep], g[keep], reference(xs[keep])):
                w.writerow((_fmt(x), _fmt(v), _fmt(r)))


def _write_histogram(path: Path, positions, bins=100):
    dens, edges = np.histogram(positions, bins=bins, density=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("xi", "g"))
        for x, v in zip(0.5 * (edges[1:] + edges[:-1]), dens):
            w.writerow((_fmt(x), _fmt(v)))


def _moments_dict(rec):
    return {f"{p:g}": v for p, v in rec.moments.items()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _try_haff(records, p=2.0):
    try:
        return haff_fit(records, p)
    except InsufficientDataError as exc:
        log.info("Haff fit skipped: %s", exc)
        return None


# ---------------------------------------------------------------------------
# modes

def _run_steady(config, out: Path, summary: dict):
    field, params, ws = build_problem(config)
    reference = m1_profile if params.gamma == 0 else None
    try:
        res = solve_steady(field, params, ws, threshold=config.threshold, cfl=config.cfl,
                           max_steps=config.max_steps, record_every=config.record_every,
                           boundary=config.boundary, symmetry=config.symmetry)
    except MaxStepsExceededError as exc:
        # keep the last state for post-mortem inspection
        _write_profile(out / "profile.csv", exc.state, reference)
        if params.gamma == 0:
            summary["l1_distance_to_m1"] = _l1_to_m1(exc.state)
        raise
    _write_moments(out / "moments.csv", res.moment_history)
    _write_profile(out / "profile.csv", res.final_field, reference)
    first, last = res.moment_history[0], res.moment_history[-1]
    summary.update(
        n_steps=res.n_steps,
        final_time=res.time,
        final_residual=res.final_residual,
        final_moments=_moments_dict(last),
        mass_drift=abs(last[0] - first[0]) / first[0],
        momentum_drift=abs(last.momentum - first.momentum) / first[0],
        solve_seconds=res.wall_time,
        value_at_origin=eval_field(res.final_field, 0.0, trace="left"),
    )
    if params.gamma == 0:
        summary["l1_distance_to_m1"] = _l1_to_m1(res.final_field)
    return 0


def _l1_to_m1(field: DGField) -> float:
    q = gauss_legendre(8)
    e = field.grid.edges
    x, w = q.on_interval(e[:-1], e[1:])
    s = q.nodes[None, :].repeat(field.grid.n_cells, 0)
    from .core import legendre_values

    g = np.einsum("cqm,cm->cq", legendre_values(s, field.degree), field.coeffs)
    return float(np.sum(w * np.abs(g - m1_profile(x))))


def _run_transient(config, out: Path, summary: dict):
    field, params, ws = build_problem(config)
    t0 = time.perf_counter()
    recs = integrate_transient(field, params, ws, config.t_end, cfl=config.cfl, record_every=config.record_every,
                               boundary=config.boundary, symmetry=config.symmetry)
    _write_moments(out / "moments.csv", recs)
    summary.update(final_moments=_moments_dict(recs[-1]), n_records=len(recs),
                   solve_seconds=time.perf_counter() - t0)
    if params.drift_coeff == 0 and params.gamma > 0:
        summary["haff_exponent_M2"] = _try_haff(recs)
        energy = [r[2] for r in recs]
        summary["energy_nonincreasing"] = bool(np.all(np.diff(energy) <= 1e-12 * energy[0]))
    return 0


def _dsmc_config(config, t_end=None):
    return DsmcConfig(n_particles=config.n_particles, t_end=config.t_end if t_end is None else t_end,
                      seed=config.seed, acceptance_target=config.acceptance_target, n_records=config.n_records)


def _run_dsmc(config, out: Path, summary: dict):
    params = model_params(config).with_drift(0.0)
    t0 = time.perf_counter()
    res = run_dsmc(_dsmc_config(config), params, initial_sampler(config))
    _write_moments(out / "moments.csv", res.records)
    _write_histogram(out / "profile.csv", res.final.positions)
    summary.update(final_moments=_moments_dict(res.records[-1]), n_steps=res.n_steps, n_events=res.n_events,
                   collapsed=res.collapsed, solve_seconds=time.perf_counter() - t0)
    if params.gamma > 0:
        summary["haff_exponent_M2"] = _try_haff(res.records)
        upper = decay_upper_series(res.records, 2.0, params)
        m2 = res.moment(2.0)
        summary["upper_envelope_max_ratio"] = float(np.max(m2 / upper))
        try:
            summary["lower_envelope"] = fit_lower_constant(res.records, params)
        except InsufficientDataError as exc:
            summary["lower_envelope"] = str(exc)
    return 0


def _run_rescaled(config, out: Path, summary: dict):
    params = model_params(config)
    t0 = time.perf_counter()
    res = rescaled_dsmc(_dsmc_config(config), params, initial_sampler(config), s_end=config.t_end)
    _write_moments(out / "moments.csv", res.records)
    summary.update(final_moments=_moments_dict(res.records[-1]), collapsed=res.collapsed,
                   solve_seconds=time.perf_counter() - t0)
    if params.gamma > 0:
        first = res.records[0]
        rep = check_rescaled_bounds(res.records, params, {2.0: first[2], 4.0: first[4]})
        summary["rescaled_bounds"] = {"bounds": rep.bounds, "max_ratio": rep.max_ratio,
                                      "violations": rep.violations}
    return 0


def _run_stability(config, out: Path, summary: dict):
    params = model_params(config).with_drift(0.0)
    times = np.linspace(0.0, config.t_end, 21)
    rows = []
    report = {}
    for d0 in config.d0:
        curves, consts = [], []
        for s in range(config.seed, config.seed + config.n_seeds):
            rng = np.random.default_rng(s)
            mu = ParticleEnsemble(initial_sampler(config)(config.n_particles, rng))
            nu = perturb_ensemble(mu, d0)
            series = stability_experiment(mu, nu, params, config.t_end, seed=s, record_times=times)
            curves.append([d for _, d in series])
            consts.append(stability_constant(series))
        curves = np.array(curves)
        med = np.median(curves, axis=0)
        for t, m, q1, q3 in zip(times, med, *np.percentile(curves, [25, 75], axis=0)):
            rows.append((t, d0, m, q1, q3))
        report[f"{d0:g}"] = {"median_final": float(med[-1]), "median_max": float(med.max()),
                             "fitted_K_median": float(np.median(consts))}
    with open(out / "stability.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time", "d0", "median", "q25", "q75"))
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    summary["stability"] = report
    return 0


def _run_checks(config, out: Path, summary: dict):
    reports = run_inequality_suite(n_samples=config.n_samples, seed=config.seed)
    with open(out / "checks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("check", "n_samples", "worst_slack", "tol", "ok"))
        for r in reports:
            w.writerow((r.name, r.n_samples, _fmt(r.worst), _fmt(r.tol), int(r.ok)))
    summary["checks"] = [
        {"name": r.name, "n_samples": r.n_samples, "worst_slack": r.worst, "ok": r.ok,
         "extra": {k: (v if not isinstance(v, dict) else {str(kk): vv for kk, vv in v.items()})
                   for k, v in r.extra.items()}}
        for r in reports
    ]
    return 0 if all(r.ok for r in reports) else EXIT_CODES["check_failed"]


_MODES = {"steady": _run_steady, "transient": _run_transient, "dsmc": _run_dsmc,
          "rescaled-dsmc": _run_rescaled, "stability": _run_stability, "checks": _run_checks}


def run(config: RunConfig, out_dir: str | Path | None = None) -> int:
    """Execute one configured run, write its artifacts and return the exit code."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    summary = {"version": __version__, "mode": config.mode, "seed": config.seed,
               "config": config.as_dict(), "config_text": config.to_text()}
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_CODES["io"]
    try:
        code = _MODES[config.mode](config, out, summary)
        summary["status"] = "ok" if code == 0 else "check_failed"
    except NumericalBlowupError as exc:
        log.error("numerical blow-up: %s", exc)
        summary.update(status="blowup", error=str(exc), step=exc.step)
        code = EXIT_CODES["blowup"]
    except MaxStepsExceededError as exc:
        log.error("step limit: %s", exc)
        summary.update(status="max_steps", error=str(exc))
        code = EXIT_CODES["max_steps"]
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        summary.update(status="config_error", error=str(exc))
        code = EXIT_CODES["config"]
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_CODES["io"]
    summary["wall_seconds"] = time.perf_counter() - t0
    try:
        with open(out / "summary.json", "w") as fh:
            json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        log.error("cannot write summary: %s", exc)
        return EXIT_CODES["io"]
    return code


def _run_replicate(args):
    config, out = args
    return run(config, out)


def run_replicates(config: RunConfig, out_dir: Path, replicates: int) -> int:
    """Run ``replicates`` seeds in parallel and merge their summaries in seed order."""
    jobs = []
    for r in range(replicates):
        cfg = dataclasses.replace(config, seed=config.seed + r)
        jobs.append((cfg, out_dir / f"replicate_{r:03d}"))
    workers = max(1, min(replicates, os.cpu_count() or 1))
    if workers == 1:
        codes = [_run_replicate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_run_replicate, jobs))
    merged = {"version": __version__, "replicates": []}
    finals = []
    for (cfg, path), code in zip(jobs, codes):
        try:
            with open(path / "summary.json") as fh:
                s = json.load(fh)
        except OSError:
            s = {"status": "io_error"}
        merged["replicates"].append({"seed": cfg.seed, "exit_code": code, "summary": s})
        if "final_moments" in s:
            finals.append(s["final_moments"])
    if finals:
        keys = sorted(finals[0], key=float)
        arr = np.array([[f[k] for k in keys] for f in finals], dtype=float)
        merged["final_moments_mean"] = dict(zip(keys, arr.mean(axis=0).tolist()))
        merged["final_moments_std"] = dict(zip(keys, arr.std(axis=0, ddof=1 if len(arr) > 1 else 0).tolist()))
    try:
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(_jsonable(merged), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError:
        return EXIT_CODES["io"]
    return max(codes)


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="inelastic1d", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="run configuration file")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--replicates", type=int, default=1, help="number of seeds to run")
    ap.add_argument("--seed", type=int, help="base seed (overrides the config)")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be >= 0", key="seed")
            config = dataclasses.replace(config, seed=args.seed)
        if args.replicates < 1:
            raise ConfigError("--replicates must be >= 1", key="replicates")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    out = Path(args.out if args.out is not None else config.out_dir)
    if args.replicates == 1:
        code = run(config, out)
    else:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"cannot create {out}: {exc}", file=sys.stderr)
            return EXIT_CODES["io"]
        code = run_replicates(config, out, args.replicates)
    if not args.quiet:
        log.info("finished with exit code %d, artifacts in %s", code, out)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line front end: solve-elliptic | solve-heat | verify-schauder |
flow | sweep.

Every command reads one JSON config (see `config`), seeds a single root
generator, writes CSV tables with fixed formatting (byte-identical for
identical config + seed) and a JSON summary carrying the config hash,
package versions and wall time.  Exit codes: 0 success, 2 validation
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, ExperimentConfig, set_by_path
from .geometry import ConeAngles
from .domains import PolydiskDomain, ConeBallDomain
from .elliptic import (EllipticProblem, SolverConfig, check_maximum_principle,
                       compare_solvers, solve_dirichlet, solve_via_epsilon_ladder)
from .linalg import SolverError
from .parabolic import (HeatConfig, ParabolicProblem,
                        check_parabolic_maximum_principle, solve_heat)
from .operators import assemble_laplacian_matrix
from .schauder import constant_blowup_scan, measure_schauder, sharpness_witness
from .flow import (FlowConfig, flow_grid, initial_state, run_flow, run_krf_toy,
                   linearization_check)
from .serial import write_field, write_spacetime

FLOAT_FMT = "{:.12g}"


def _fmt(v) -> str:
    if isinstance(v, float):
        return FLOAT_FMT.format(v)
    return str(v)


def write_csv(path: Path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_summary(path: Path, cfg: ExperimentConfig, payload: dict, t0: float):
    out = dict(config_hash=cfg.hash(), version=__version__,
               numpy=np.__version__, wall_time_s=time.time() - t0)
    out.update(payload)
    path.write_text(json.dumps(out, sort_keys=True, indent=2, default=str) + "\n")


def _angles(cfg: ExperimentConfig) -> ConeAngles:
    return ConeAngles(tuple(cfg.get("angles", "betas")), cfg.get("angles", "n"))


def _domain(cfg: ExperimentConfig, angles: ConeAngles):
    g = cfg.data["grid"]
    if g.get("domain", "polydisk") == "ball":
        return ConeBallDomain(angles, g["radius"])
    return PolydiskDomain(angles, g["radius"], g["tangential_halfwidth"],
                          g.get("tangential_periodic", False))


def _solver_config(cfg: ExperimentConfig) -> SolverConfig:
    g = cfg.data["grid"]
    return SolverConfig(n_radial=g["n_radial"], n_theta=g["n_theta"],
                        n_tangential=g["n_tangential"],
                        tol=cfg.get("tolerances", "solver", default=1e-10))


def cmd_solve_elliptic(cfg: ExperimentConfig, out: Path, t0: float) -> int:
    angles = _angles(cfg)
    problem = EllipticProblem(_domain(cfg, angles), angles,
                              f=None if cfg.get("fields", "f") == "zero"
                              else cfg.get("fields", "f"),
                              phi=cfg.get("fields", "phi"))
    report = solve_dirichlet(problem, _solver_config(cfg))
    payload = dict(residual=report.residual, method=report.info.method,
                   iterations=report.info.iterations)
    rows = [("residual", report.residual), ("method", report.info.method)]
    if "max_principle" in cfg.data["diagnostics"] and problem.f_fn is None:
        diag = check_maximum_principle(report)
        payload["max_principle"] = diag.measured
        rows.append(("max_principle_worst", diag.measured["worst_violation"]))
    if "epsilon_ladder" in cfg.data["diagnostics"]:
        solves, gaps = solve_via_epsilon_ladder(problem)
        sup_diff = compare_solvers(report, solves[-1])
        payload["epsilon_gaps"] = gaps
        payload["cross_solver_sup_diff"] = sup_diff
        rows.append(("cross_solver_sup_diff", sup_diff))
    write_field(out / "solution.cfld", report.u)
    write_csv(out / "summary.csv", ("key", "value"), rows)
    write_summary(out / "summary.json", cfg, payload, t0)
    return 0


def cmd_solve_heat(cfg: ExperimentConfig, out: Path, t0: float) -> int:
    angles = _angles(cfg)
    tsec = cfg.data["time"]
    g = cfg.data["grid"]
    config = HeatConfig(n_radial=g["n_radial"], n_theta=g["n_theta"],
                        n_tangential=g["n_tangential"],
                        tol=cfg.get("tolerances", "solver", default=1e-10),
                        n_steps=tsec["n_steps"], theta=tsec["theta"],
                        time_grading=tsec["grading"])
    problem = ParabolicProblem(_domain(cfg, angles), angles, tsec["T"],
                               f=None if cfg.get("fields", "f") == "zero"
                               else cfg.get("fields", "f"),
                               u0=cfg.get("fields", "u0"),
                               phi=cfg.get("fields", "phi"))
    st = solve_heat(problem, config)
    payload = dict(levels=len(st.times), final_sup=float(np.abs(st.values[-1]).max()))
    rows = [("final_sup", payload["final_sup"])]
    if "max_principle" in cfg.data["diagnostics"]:
        op = assemble_laplacian_matrix(st.grid)
        diag = check_parabolic_maximum_principle(st, op.boundary)
        payload["max_principle"] = diag.measured
        rows.append(("max_principle_worst", diag.measured["worst_violation"]))
    write_spacetime(out / "solution.cfld", st)
    write_csv(out / "summary.csv", ("key", "value"), rows)
    write_summary(out / "summary.json", cfg, payload, t0)
    return 0


def cmd_verify_schauder(cfg: ExperimentConfig, out: Path, t0: float) -> int:
    angles = _angles(cfg)
    seed = cfg.data["seed"]
    rows = []
    witness = sharpness_witness(angles)
    for name, entry in witness.entries.items():
        rows.append((",".join(map(str, angles.betas)), "", name,
                     entry["fitted"], entry["target"], entry["residual"], seed))
    for alpha in cfg.data["alphas"]:
        m = measure_schauder(angles, alpha, cfg.get("fields", "f"),
                             cfg.get("fields", "phi"), _solver_config(cfg),
                             seed=seed)
        for tag, fit in m.fits.items():
            if fit.alpha_hat is None:
                continue
            rows.append((",".join(map(str, angles.betas)), alpha, tag,
                         fit.alpha_hat, m.ratio, fit.residual, seed))
    write_csv(out / "exponents.csv",
              ("beta", "alpha", "operator", "fitted_exponent", "ratio",
               "residual", "seed"), rows)
    write_summary(out / "summary.json", cfg,
                  dict(rows=len(rows), witness_pass=witness.passed()), t0)
    return 0


def cmd_flow(cfg: ExperimentConfig, out: Path, t0: float) -> int:
    angles = _angles(cfg)
    fsec = cfg.data["flow"]
    grid = flow_grid(angles, n_radial=fsec["n_radial"],
                     n_tangential=fsec["n_tangential"])
    fcfg = FlowConfig(dt=fsec["dt"])
    if fsec["chi"]:
        rep = run_krf_toy(angles, fsec["chi"], fsec["T"], grid=grid, config=fcfg)
        payload = dict(drift_slope=rep.drift_slope, chi=rep.chi,
                       ricci_seminorm=rep.ricci_seminorm, horizon=rep.horizon)
    else:
        state = initial_state(grid, config=fcfg)
        run_flow(state, fsec["T"])
        rng = np.random.default_rng(cfg.data["seed"])
        v = rng.standard_normal(grid.shape) * 0.05
        payload = dict(fixed_point_drift=float(np.abs(state.phi).max()),
                       linearization_gap=linearization_check(state, v),
                       steps=len(state.times) - 1)
    write_csv(out / "summary.csv", ("key", "value"),
              sorted(payload.items()))
    write_summary(out / "summary.json", cfg, payload, t0)
    return 0


def _sweep_tuples(sw: dict):
    import itertools
    keys = sorted(sw.get("grid_params", {}).keys())
    values = [sw["grid_params"][k] for k in keys]
    for combo in itertools.product(*values):
        yield dict(zip(keys, combo))


def _run_sweep_tuple(args):
    base, updates, out_dir, index = args
    data = json.loads(base)
    data["command"] = data["sweep"]["command"]
    sweep = data.pop("sweep")
    for key, val in updates.items():
        set_by_path(data, key, val)
    sub_out = Path(out_dir) / f"tuple_{index:04d}"
    sub_out.mkdir(parents=True, exist_ok=True)
    try:
        cfg = ExperimentConfig(data).normalize().validate()
        code = run_command(cfg, sub_out)
        return index, updates, code, None
    except Exception as exc:  # per-tuple failures recorded, sweep continues
        return index, updates, 3, str(exc)


def cmd_sweep(cfg: ExperimentConfig, out: Path, t0: float, threads: int = 1) -> int:
    tuples = list(_sweep_tuples(cfg.data["sweep"]))
    base = cfg.serialize()
    args = [(base, upd, str(out), i) for i, upd in enumerate(tuples)]
    if threads > 1:
        with get_context("fork").Pool(threads) as pool:
            results = pool.map(_run_sweep_tuple, args)
    else:
        results = [_run_sweep_tuple(a) for a in args]
    results.sort(key=lambda r: r[0])
    rows = []
    failures = []
    for index, updates, code, err in results:
        rows.append((index, json.dumps(updates, sort_keys=True), code))
        if err is not None:
            failures.append(dict(index=index, error=err))
    write_csv(out / "sweep.csv", ("index", "params", "exit_code"), rows)
    # merge per-tuple exponent tables when present, deterministically
    merged = []
    for index, *_ in results:
        sub = out / f"tuple_{index:04d}" / "exponents.csv"
        if sub.exists():
            lines = sub.read_text().strip().split("\n")
            merged.extend(f"{index},{ln}" for ln in lines[1:])
    if merged:
        header = "index," + (out / f"tuple_{results[0][0]:04d}" / "exponents.csv") \
            .read_text().split("\n", 1)[0]
        (out / "merged_exponents.csv").write_text(
            "\n".join([header] + sorted(merged)) + "\n")
    write_summary(out / "summary.json", cfg,
                  dict(tuples=len(tuples), failures=failures), t0)
    return 0 if not failures else 3


def run_command(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    cmd = cfg.data["command"]
    if cmd == "solve-elliptic":
        return cmd_solve_elliptic(cfg, out, t0)
    if cmd == "solve-heat":
        return cmd_solve_heat(cfg, out, t0)
    if cmd == "verify-schauder":
        return cmd_verify_schauder(cfg, out, t0)
    if cmd == "flow":
        return cmd_flow(cfg, out, t0)
    if cmd == "sweep":
        return cmd_sweep(cfg, out, t0, threads)
    raise ConfigError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="conelab",
        description="Numerical laboratory for cone-metric elliptic/parabolic "
                    "equations")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="conelab_out")
    parser.add_argument("--dry-run", action="store_true")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        cfg = ExperimentConfig.parse(Path(args.config).read_text())
        if cfg.data["command"] != args.command:
            cfg.data["command"] = args.command
            cfg.validate()
        if args.seed is not None:
            cfg.data["seed"] = args.seed
    except (ConfigError, OSError) as exc:
        print(json.dumps(dict(error="validation", detail=str(exc))), file=sys.stderr)
        return 2

    if args.dry_run:
        print(cfg.serialize(), end="")
        return 0
    try:
        return run_command(cfg, Path(args.out), args.threads)
    except (SolverError, RuntimeError) as exc:
        print(json.dumps(dict(error="solver", detail=str(exc))), file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())

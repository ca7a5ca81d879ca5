"""Command-line front end: ``fdkp verify-lump | solve | sweep | plot-data | check-format``.

Exit codes: 0 success, 2 a tolerance or validation check failed, 3 a solver diverged or
stalled, 4 the configuration (or an input path) is invalid.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .fieldfile import FieldFormatError, check_file, read_field, write_field
from .functionals import residual_steady_kp, t0
from .grid_spectral import Field, Grid2D, NormKind, norm_weight, weighted_sum
from .lump import LumpParams, load_oracle_fixture, lump_oracle_scalars, lump_sample, lump_values
from .reduction import ReductionError, solve_u2
from .solver import HISTORY_COLUMNS, SolverError, align, solve
from .symbols import build_table, eval_m

log = logging.getLogger("fdkp_waves")

EXIT_OK, EXIT_TOLERANCE, EXIT_DIVERGED, EXIT_CONFIG = 0, 2, 3, 4
SWEEP_COLUMNS = ("eps", "c_eps", "Q", "S", "zeta_gap_ytilde", "rel_eps_gap", "iterations", "wall_time")


# ---------------------------------------------------------------------------------------
# output helpers


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else _fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _slope(xs, ys) -> float:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


# ---------------------------------------------------------------------------------------
# verify-lump


def lump_residual(beta: float, nx: int, ny: int, lx: float, ly: float) -> dict:
    grid = Grid2D(nx, ny, lx, ly)
    table = build_table(grid, beta, 0.3)
    _, norms = residual_steady_kp(lump_sample(LumpParams(beta), grid), table)
    return norms


def cmd_verify_lump(cfg: RunConfig) -> int:
    nx, ny = cfg.resolved_shape("kp0")
    checks = {}
    main = lump_residual(cfg.beta, nx, ny, cfg.lx, cfg.ly)
    larger = lump_residual(cfg.beta, nx, ny, 1.5 * cfg.lx, 1.5 * cfg.ly)
    smaller = lump_residual(cfg.beta, nx, ny, 0.5 * cfg.lx, 0.5 * cfg.ly)
    checks["residual_ytilde"] = {"value": main["rel_ytilde"], "threshold": 1e-2,
                                 "passed": main["rel_ytilde"] <= 1e-2}
    checks["residual_decreases_with_box"] = {"value": larger["rel_ytilde"], "threshold": main["rel_ytilde"],
                                             "passed": larger["rel_ytilde"] < main["rel_ytilde"]}

    params = LumpParams(cfg.beta)
    oracle = None
    if cfg.oracle == "fixture":
        fix = load_oracle_fixture()
        if math.isclose(fix["meta"]["beta"], cfg.beta, rel_tol=1e-14):
            oracle = fix
    if oracle is None:
        oracle = lump_oracle_scalars(params)
    ratio = oracle["T0"] / oracle["Q"]
    checks["oracle_nehari_ratio"] = {"value": ratio, "threshold": 1e-4, "passed": abs(ratio - 1 / 3) <= 1e-4}
    checks["oracle_negative_cubic"] = {"value": oracle["S"], "threshold": 0.0, "passed": oracle["S"] < 0}
    checks["oracle_mass_doubling"] = {"value": oracle["doubling_change"], "threshold": 1e-4,
                                      "passed": oracle["doubling_change"] <= 1e-4}

    grid = Grid2D(nx, ny, cfg.lx, cfg.ly)
    spectral = t0(lump_sample(params, grid), build_table(grid, cfg.beta, 0.3))
    report = {
        "beta": cfg.beta,
        "grid": {"nx": nx, "ny": ny, "lx": cfg.lx, "ly": cfg.ly},
        "residual": main,
        "residual_box_x1.5": larger,
        "residual_box_x0.5": smaller,
        "residual_half_box_larger": smaller["rel_ytilde"] > main["rel_ytilde"],
        "oracle": {k: oracle[k] for k in ("Q", "S", "T0", "mass", "doubling_change")},
        "spectral_T0": spectral.value,
        "spectral_T0_rel_diff": abs(spectral.value - oracle["T0"]) / oracle["T0"],
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }
    out = cfg.output_dir()
    _write(out / "verify_lump.json", dumps_json(report))
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: {c['value']:.6g} (threshold {c['threshold']:.3g})")
    return EXIT_OK if report["passed"] else EXIT_TOLERANCE


# ---------------------------------------------------------------------------------------
# solve


def write_ground_state(gs, out: Path, stem: str, formats, timing: bool) -> None:
    if "json" in formats:
        _write(out / f"{stem}.json", dumps_json(gs.to_json(timing)))
    if "csv" in formats:
        _write(out / f"{stem}_history.csv", _csv_text(HISTORY_COLUMNS, gs.history))
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / f"{stem}_zeta.fdkpfld", gs.zeta)
    if gs.u is not None:
        write_field(out / f"{stem}_u.fdkpfld", gs.u)


def cmd_solve(cfg: RunConfig) -> int:
    sc = cfg.solver_config()
    grid = cfg.grid()
    try:
        gs = solve(sc, grid)
    except (SolverError, ReductionError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = cfg.output_dir()
    write_ground_state(gs, out, "ground_state", cfg.formats, cfg.timing)
    if sc.target == "fdkp_reduced" and "csv" in cfg.formats:
        # replay the off-cone solve at the final profile so its iteration log can be inspected
        table = build_table(gs.u.grid, sc.beta, sc.delta)
        u1 = Field.from_hat(gs.u.grid, table.chi * gs.u.hat)
        state = solve_u2(u1, sc.eps, table, sc.picard_tol, sc.picard_max_iter, s=sc.s, p=sc.p, dealias=sc.dealias)
        _write(out / "picard_log.csv", state.log_csv())
    for name, c in gs.certificates.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: {c['value']:.6g}")
    print(f"T = {gs.value:.12g}  Q = {gs.Q:.12g}  S = {gs.S:.12g}  residual = {gs.residual:.3e}  "
          f"iterations = {gs.iterations}")
    return EXIT_OK if gs.passed else EXIT_TOLERANCE


# ---------------------------------------------------------------------------------------
# sweep


def _sweep_row(args) -> dict:
    cfg, eps, ref_hat = args
    sc = cfg.solver_config(target=cfg.sweep_target, eps=eps)
    grid = cfg.grid(cfg.sweep_target)
    t_start = time.perf_counter()
    row = {"eps": eps}
    try:
        gs = solve(sc, grid)
    except (SolverError, ReductionError) as exc:
        row.update({"failed": True, "error": str(exc)})
        return row
    wall = time.perf_counter() - t_start
    ref = Field.from_hat(grid, ref_hat)
    zeta_aligned, shift = align(gs.zeta, ref)
    wy = norm_weight(grid, NormKind.Ytilde(cfg.beta))
    zgap = math.sqrt(weighted_sum(grid, wy, zeta_aligned.hat - ref.hat))
    fine = gs.u.grid
    u_star = Field.from_hat(fine, math.sqrt(eps) * ref.hat)
    u_aligned, _ = align(gs.u, u_star)
    we = norm_weight(fine, NormKind.Eps(eps, cfg.beta))
    rel_gap = math.sqrt(weighted_sum(fine, we, u_aligned.hat - u_star.hat) / weighted_sum(fine, we, u_star.hat))
    table = build_table(fine, cfg.beta, cfg.delta)
    off = (fine.k1 != 0) & (table.chi == 0)
    u2x = math.sqrt(weighted_sum(fine, norm_weight(fine, NormKind.X(cfg.s)), off * gs.u.hat))
    row.update({
        "failed": False, "c_eps": gs.value, "Q": gs.Q, "S": gs.S, "zeta_gap_ytilde": zgap,
        "rel_eps_gap": rel_gap, "iterations": gs.iterations, "wall_time": wall if cfg.timing else None,
        "u2_x_norm": u2x, "residual": gs.residual, "certificates_passed": gs.passed,
    })
    return row


def run_sweep(cfg: RunConfig) -> dict:
    eps_list = sorted({float(e) for e in cfg.sweep}, reverse=True)
    if len(eps_list) < 3:
        raise ConfigError(f"a sweep needs at least 3 distinct eps values, got {len(eps_list)}")
    if any(not 0.0 < e <= 0.25 for e in eps_list):
        raise ConfigError(f"sweep eps values must lie in (0, 0.25], got {eps_list}")
    grid = cfg.grid(cfg.sweep_target)
    ref = solve(cfg.solver_config(target="kp0"), grid)
    c0 = ref.value
    jobs = [(cfg, e, np.array(ref.zeta.hat)) for e in eps_list]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(jobs))) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    rows.sort(key=lambda r: -r["eps"])
    good = [r for r in rows if not r["failed"]]
    for r in good:
        r["c_gap"] = abs(r["c_eps"] - c0)
    cg = [r["c_gap"] for r in good]
    ug = [r["rel_eps_gap"] for r in good]
    eps_good = [r["eps"] for r in good]
    report = {
        "c0": c0,
        "kp_residual": ref.residual,
        "target": cfg.sweep_target,
        "method": cfg.method,
        "grid": {"nx": grid.nx, "ny": grid.ny, "lx": grid.lx, "ly": grid.ly},
        "rows": rows,
        "complete": len(good) == len(rows),
        "c_gap_decreasing": len(good) == len(rows) and all(a > b for a, b in zip(cg, cg[1:])),
        "rel_eps_gap_decreasing": len(good) == len(rows) and all(a > b for a, b in zip(ug, ug[1:])),
        "all_c_positive": all(r["c_eps"] > 0 for r in good),
        "slopes": {
            "c_gap": _slope(eps_good, cg),
            "rel_eps_gap": _slope(eps_good, ug),
            "zeta_gap_ytilde": _slope(eps_good, [r["zeta_gap_ytilde"] for r in good]),
            "u2_x_norm": _slope(eps_good, [r["u2_x_norm"] for r in good]),
        },
    }
    return report


def cmd_sweep(cfg: RunConfig) -> int:
    try:
        report = run_sweep(cfg)
    except (SolverError, ReductionError) as exc:
        print(f"reference KP solve failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = cfg.output_dir()
    if "json" in cfg.formats:
        _write(out / "sweep.json", dumps_json(report))
    if "csv" in cfg.formats:
        _write(out / "sweep.csv", _csv_text(SWEEP_COLUMNS, [r for r in report["rows"]]))
    print(f"c0 = {report['c0']:.12g}")
    for r in report["rows"]:
        if r["failed"]:
            print(f"eps = {r['eps']:g}: FAILED ({r['error']})")
        else:
            print(f"eps = {r['eps']:g}: c = {r['c_eps']:.12g}  |c - c0| = {r['c_gap']:.4e}  "
                  f"rel eps-gap = {r['rel_eps_gap']:.4e}  |u2|_X = {r['u2_x_norm']:.4e}")
    print(f"slopes: {report['slopes']}")
    if not report["complete"]:
        return EXIT_DIVERGED
    ok = report["c_gap_decreasing"] and report["rel_eps_gap_decreasing"] and report["all_c_positive"]
    return EXIT_OK if ok else EXIT_TOLERANCE


# ---------------------------------------------------------------------------------------
# plot-data


def cmd_plotdata(cfg: RunConfig, field_path: str | None = None, report_path: str | None = None,
                 max_points: int = 128) -> int:
    out = cfg.output_dir()
    if field_path:
        f = read_field(field_path)
        grid, vals = f.grid, f.values
        source = str(field_path)
    else:
        nx, ny = cfg.resolved_shape("kp0")
        e = cfg.lump_eps
        grid = Grid2D(nx, ny, cfg.lx / e, cfg.ly / e**2)
        vals = lump_values(LumpParams(cfg.beta, e), grid.x[:, None], grid.y[None, :])
        source = f"lump(beta={cfg.beta!r}, eps={e!r})"
    ic, jc = grid.nx // 2, grid.ny // 2
    _write(out / "slice_y0.csv", _csv_text(("x", "value"), [{"x": float(x), "value": float(v)}
                                                           for x, v in zip(grid.x, vals[:, jc])]))
    _write(out / "slice_x0.csv", _csv_text(("y", "value"), [{"y": float(y), "value": float(v)}
                                                           for y, v in zip(grid.y, vals[ic, :])]))
    sx = max(1, grid.nx // max_points)
    sy = max(1, grid.ny // max_points)
    _write(out / "grid_downsampled.json", dumps_json({
        "source": source, "stride": [sx, sy],
        "x": grid.x[::sx].tolist(), "y": grid.y[::sy].tolist(), "values": vals[::sx, ::sy].tolist(),
    }))
    k1 = np.linspace(0.0, 10.0, 201)
    disp = [{"k1": float(k), "c": eval_m(float(k), 0.0, cfg.beta)} for k in k1]
    _write(out / "dispersion.csv", _csv_text(("k1", "c"), disp))
    if report_path:
        rep = json.loads(Path(report_path).read_text())
        rows = [{"eps": r["eps"], "c_gap": r.get("c_gap"), "rel_eps_gap": r.get("rel_eps_gap"),
                 "u2_x_norm": r.get("u2_x_norm")} for r in rep["rows"] if not r.get("failed")]
        _write(out / "convergence.csv", _csv_text(("eps", "c_gap", "rel_eps_gap", "u2_x_norm"), rows))
    return EXIT_OK


# ---------------------------------------------------------------------------------------
# check-format


def cmd_check_format(paths) -> int:
    status = EXIT_OK
    for p in paths:
        try:
            head = check_file(p)
        except FileNotFoundError:
            print(f"{p}: no such file", file=sys.stderr)
            return EXIT_CONFIG
        except FieldFormatError as exc:
            print(f"{p}: INVALID ({exc})")
            status = EXIT_TOLERANCE
            continue
        print(f"{p}: OK version={head.version} nx={head.nx} ny={head.ny} lx={head.lx!r} ly={head.ly!r}")
    return status


# ---------------------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdkp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="key = value configuration file")
        for name in cfgmod.option_names():
            p.add_argument(f"--{name.replace('_', '-')}", dest=f"opt_{name}", metavar="VALUE",
                           help=argparse.SUPPRESS)
        return p

    with_config(sub.add_parser("verify-lump", help="check the explicit lump against residual and oracle"))
    with_config(sub.add_parser("solve", help="compute one ground state"))
    with_config(sub.add_parser("sweep", help="eps-convergence study"))
    pd = with_config(sub.add_parser("plot-data", help="emit slices, grids and dispersion samples"))
    pd.add_argument("--field", dest="field_path", help="FDKPFLD1 file to slice (default: the lump)")
    pd.add_argument("--report", dest="report_path", help="sweep.json to tabulate")
    cf = sub.add_parser("check-format", help="validate FDKPFLD1 files")
    cf.add_argument("paths", nargs="+")
    sub.add_parser("print-config", help="print the default configuration")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = cfgmod.load(args.config)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
    if overrides:
        cfg = cfgmod.parse_pairs(overrides, cfg)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check-format":
        return cmd_check_format(args.paths)
    if args.command == "print-config":
        sys.stdout.write(cfgmod.emit(RunConfig()))
        return EXIT_OK
    try:
        cfg = resolve_config(args)
        if args.command == "verify-lump":
            return cmd_verify_lump(cfg)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_plotdata(cfg, args.field_path, args.report_path)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FieldFormatError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 2 the solver did not converge (a valid outcome, the
report is still written), 1 any other error, usage errors included.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import artifacts, io, plotting
from .closed_form import ClosedFormSolution
from .coupler import picard_solve
from .errors import ConfigError, FiresaleError
from .model import (
    GridSpec,
    InitialDistribution,
    ModelParams,
    dump_scenarios,
    load_scenario_file,
    scenario,
    scenario_library,
)
from .validation import validate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NONCONVERGED = 2

log = logging.getLogger("firesale_mfg")

_INITIAL_AXES = {"mean_q": ("mean", 0), "mean_x": ("mean", 1), "var_q": ("var", 0), "var_x": ("var", 1)}


class _Parser(argparse.ArgumentParser):
    # usage errors must not collide with the non-convergence code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _grid_arg(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grid expects nt,nq,nx integers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"--grid expects three integers nt,nq,nx, got {text!r}")
    return parts


def _values_arg(text: str) -> list[float]:
    vals = [v for v in text.split(",") if v.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty value list")
    try:
        return [float(v) for v in vals]
    except ValueError:
        raise argparse.ArgumentTypeError(f"values must be numbers, got {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser, grid_default=None):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", type=int, help="built-in scenario number (1-4)")
    src.add_argument("--config", type=Path, help="scenario file (YAML, one document per scenario)")
    p.add_argument("--index", type=int, default=0, help="document index inside --config (default 0)")
    p.add_argument("--unregulated", action="store_true", help="disable the capital constraint")
    p.add_argument("--grid", type=_grid_arg, default=grid_default, help="step counts nt,nq,nx")
    p.add_argument("--theta", type=float, help="relaxation of the drift path (0 < theta <= 1)")
    p.add_argument("--delta", type=float, help="shift inside the density drift block")
    p.add_argument("--tol-inner", type=float, dest="tol_inner")
    p.add_argument("--tol-outer", type=float, dest="tol_outer")
    p.add_argument("--max-inner", type=int, dest="max_inner")
    p.add_argument("--max-outer", type=int, dest="max_outer")


def config_from_args(args):
    if args.config is not None:
        docs = load_scenario_file(args.config)
        if not 0 <= args.index < len(docs):
            raise ConfigError(f"{args.config} has {len(docs)} document(s); index {args.index} is out of range")
        cfg = docs[args.index]
    else:
        cfg = scenario(args.scenario if args.scenario is not None else 1)
    changes = {}
    if args.unregulated:
        changes["regulated"] = False
    for flag, name in [
        ("theta", "theta"),
        ("delta", "delta"),
        ("tol_inner", "inner_tol"),
        ("tol_outer", "outer_tol"),
        ("max_inner", "max_inner"),
        ("max_outer", "max_outer"),
    ]:
        v = getattr(args, flag, None)
        if v is not None:
            changes[name] = v
    if changes:
        cfg = cfg.replace(**changes)
    if args.grid is not None:
        nt, nq, nx = args.grid
        cfg = cfg.with_grid(n_t=nt, n_q=nq, n_x=nx)
    return cfg


def default_out_dir(cfg, kind="run") -> Path:
    root = Path(os.environ.get("MFG_OUT_DIR", "runs"))
    tag = "reg" if cfg.regulated else "unreg"
    return root / f"{kind}-{cfg.id}-{tag}-{cfg.config_hash()[:8]}"


# subcommands ------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = config_from_args(args)
    out = args.out or default_out_dir(cfg)
    t0 = time.perf_counter()
    result = picard_solve(cfg)
    t_solve = time.perf_counter() - t0
    layout = artifacts.write_run(result, out, args.q_anchor, args.x_anchor, binary=not args.no_binary)
    # manifest first: the plotter reads the boundary and layout from it
    artifacts.write_manifest(out, result, layout)
    t1 = time.perf_counter()
    if result.u is not None and not args.no_plots:
        plotting.render_run(out)
    timings = {"solve_seconds": round(t_solve, 3), "export_seconds": round(time.perf_counter() - t1, 3)}
    manifest = artifacts.write_manifest(out, result, layout, timings)
    print(
        f"scenario {cfg.id} ({'regulated' if cfg.regulated else 'unregulated'}): {result.status} "
        f"after {result.iterations} outer iteration(s), error {result.final_error:.3e}"
    )
    print(f"wrote {len(manifest['artifacts'])} artifacts to {out}")
    if not result.converged:
        print(f"non-convergence: {result.message}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = config_from_args(args)
    base = cfg.grid
    report = validate(cfg, levels=args.levels, base_grid=base)
    cols = ["n_t", "n_q", "n_x", "status", "u_linf", "u_rel", "u_l1", "nu_linf", "mu_linf", "mu_rel", "mass_dev"]
    print(" ".join(f"{c:>12}" for c in cols))
    for lv in report.levels:
        r = lv.row()
        print(" ".join(f"{r[c]:>12.4e}" if isinstance(r[c], float) else f"{r[c]!s:>12}" for c in cols))
    if report.orders:
        print("empirical order (u_linf): " + ", ".join(f"{o:.2f}" for o in report.orders))
    print("PASS" if report.passed else "FAIL")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        io.write_json(args.out, report.as_dict())
    if not report.all_converged:
        return EXIT_NONCONVERGED
    return EXIT_OK if report.passed else EXIT_ERROR


def _apply_axis(cfg, axis: str, value: float):
    if axis in _INITIAL_AXES:
        attr, idx = _INITIAL_AXES[axis]
        pair = list(getattr(cfg.initial, attr))
        pair[idx] = value
        return cfg.with_initial(**{attr: tuple(pair)})
    names = {f.name for f in dataclasses.fields(ModelParams)}
    if axis not in names:
        valid = sorted(names | set(_INITIAL_AXES))
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {valid}")
    return cfg.with_params(**{axis: value})


SWEEP_COLUMNS = ["value", "converged", "outer_iterations", "final_error", "peak_lambda", "peak_time", "final_mass", "peak_abs_mu"]


def cmd_sweep(args) -> int:
    base = config_from_args(args)
    out = Path(args.out or default_out_dir(base, "sweep-" + args.axis))
    out.mkdir(parents=True, exist_ok=True)
    # validate the axis before spending time on solves
    _apply_axis(base, args.axis, args.values[0])
    rows, reports = [], []
    any_failed = False
    for v in args.values:
        cfg = _apply_axis(base, args.axis, v)
        res = picard_solve(cfg)
        rep = res.report()
        rep["sweep_value"] = v
        reports.append(rep)
        any_failed |= not res.converged
        if res.diagnostics is not None:
            lam = res.diagnostics.liquidation_intensity
            k = int(np.argmax(lam))
            row = [v, float(res.converged), res.iterations, res.final_error, lam[k], cfg.times[k],
                   res.diagnostics.mass[-1], float(np.max(np.abs(res.path.mu)))]
        else:
            row = [v, 0.0, res.iterations, res.final_error] + [float("nan")] * 4
        rows.append(row)
        print(f"{args.axis}={v:g}: {res.status} ({res.iterations} outer)", flush=True)
    io.write_table(out / "sweep.csv", SWEEP_COLUMNS, rows)
    io.write_json(out / "sweep_report.json", {"axis": args.axis, "points": reports})
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_NONCONVERGED if any_failed else EXIT_OK


def cmd_plot(args) -> int:
    paths = plotting.render_run(args.run_dir)
    artifacts.refresh_manifest(args.run_dir)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_closed_form(args) -> int:
    cfg = config_from_args(args)
    E0 = args.E0 if args.E0 is not None else cfg.initial.mean[0]
    cf = ClosedFormSolution(cfg.params, E0)
    times = np.linspace(0.0, cfg.params.T, args.points)
    table = cf.table(times)
    if args.out:
        io.write_columns(args.out, {k: table[k] for k in io.CLOSED_FORM_COLUMNS})
        print(f"wrote {args.out}")
    else:
        import csv

        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(io.CLOSED_FORM_COLUMNS)
        for row in zip(*(table[k] for k in io.CLOSED_FORM_COLUMNS)):
            w.writerow([io.fmt(v) for v in row])
    return EXIT_OK


def cmd_scenarios(args) -> int:
    grid = None
    if args.grid is not None:
        nt, nq, nx = args.grid
        grid = dataclasses.replace(GridSpec(), n_t=nt, n_q=nq, n_x=nx)
    lib = scenario_library(grid)
    if args.action == "list":
        for c in lib:
            p = c.params
            weight = f"alpha={p.alpha}" if not p.split_mode else f"alpha_active={p.alpha_active} alpha_liq={p.alpha_liq}"
            print(f"{c.id}: {weight} kappa={p.kappa} mu_ex={p.mu_ex} mean={c.initial.mean}")
        return EXIT_OK
    if args.out:
        with open(args.out, "w") as fh:
            dump_scenarios(lib, fh)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(dump_scenarios(lib))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="firesale-mfg", description="Fire-sale mean-field game solver")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run the Picard solver and export artifacts")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, help="output directory (default under $MFG_OUT_DIR or ./runs)")
    p.add_argument("--q-anchor", type=float, default=artifacts.DEFAULT_Q_ANCHOR, dest="q_anchor")
    p.add_argument("--x-anchor", type=float, default=artifacts.DEFAULT_X_ANCHOR, dest="x_anchor")
    p.add_argument("--no-plots", action="store_true", dest="no_plots")
    p.add_argument("--no-binary", action="store_true", dest="no_binary")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="compare the unregulated solver against the closed form")
    _add_config_flags(p)
    p.add_argument("--levels", type=int, default=1, help="refinement levels starting at --grid")
    p.add_argument("--out", type=Path, help="write the report as JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="solve along one parameter axis")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, help="ModelParams field, or mean_q/mean_x/var_q/var_x")
    p.add_argument("--values", required=True, type=_values_arg, help="comma-separated values")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render SVG figures of a run directory")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("closed-form", help="tabulate the unregulated coefficient functions")
    _add_config_flags(p)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--E0", type=float, help="initial mean inventory (default: scenario mean)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_closed_form)

    p = sub.add_parser("scenarios", help="list or export the built-in scenario library")
    p.add_argument("action", choices=["list", "export"])
    p.add_argument("--grid", type=_grid_arg)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FiresaleError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

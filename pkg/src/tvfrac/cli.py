"""Command-line front end.

Exit codes: 0 ok, 1 usage error, 2 config or alignment error, 3 numerical
divergence, 4 a ``*-check`` command ran but did not pass.

Every flag can also be set through an environment variable named
``TVFRAC_<FLAG>`` (upper case, dashes as underscores), e.g. ``TVFRAC_SEED``
or ``TVFRAC_GRADIENT_MODE``. Flags given on the command line win.
"""
import argparse
import concurrent.futures as cf
import json
import logging
import os
import statistics
import sys
import time
from dataclasses import replace

import numpy as np

from . import presets, verify
from .adjoint import GRADIENT_MODES, weighted_sq_norms
from .config import load_config
from .errors import AlignmentError, ConfigError, DivergenceError, InvalidArgument, UndefinedRatio
from .forward import SourceSeparable, forward_solve, stability_check
from .harness import (
    TABLE_COLUMNS, build_true_source, emit_summary, emit_table, run_experiment, setup, write_artifacts,
)
from .pdsolver import DUAL_POINTS

log = logging.getLogger("tvfrac")

ENV_PREFIX = "TVFRAC_"
EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4
COMMANDS = (
    "forward", "gradient-check", "adjoint-check", "norm-estimate",
    "invert", "table1", "example2", "mms-convergence",
)
SLOW_CELL_SECONDS = 600.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for config errors here
    def error(self, message):
        raise UsageError(message)


def _env(name):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))


def _env_int(name, minimum):
    raw = _env(name)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{ENV_PREFIX}{name.upper()}={raw!r} is not an integer") from None
    if value < minimum:
        raise UsageError(f"{ENV_PREFIX}{name.upper()} must be >= {minimum}")
    return value


def _env_choice(name, choices):
    raw = _env(name)
    if raw is not None and raw not in choices:
        raise UsageError(f"{ENV_PREFIX}{name.upper().replace('-', '_')}={raw!r}; expected one of {choices}")
    return raw


def _env_flag(name):
    raw = _env(name)
    if raw is None:
        return False
    return raw.lower() in ("1", "true", "yes", "on")


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _pos_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--out", metavar="DIR", help="output directory (default ./tvfrac_out/<command>)")
    common.add_argument("--seed", type=_nonneg_int, metavar="U64", help="noise seed override")
    common.add_argument("--jobs", type=_pos_int, metavar="N", help="worker processes for table1")
    common.add_argument("--repeats", type=_pos_int, metavar="N",
                        help="seeds per cell for table1/example2 (seed, seed+1, ...)")
    common.add_argument("--strict-step-condition", action="store_true", default=None,
                        help="abort when the step-size condition fails")
    common.add_argument("--gradient-mode", choices=GRADIENT_MODES)
    common.add_argument("--dual-point", choices=DUAL_POINTS)
    common.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    parser = _Parser(prog="tvfrac", description="TV-regularized source identification for subdiffusion.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "forward": "solve the direct problem for the config's source",
        "gradient-check": "finite-difference check of the misfit gradient",
        "adjoint-check": "discrete adjoint identity on small random instances",
        "norm-estimate": "power-iteration estimate of the forward operator norm",
        "invert": "run one inversion and write its artifacts",
        "table1": "all 18 one-dimensional reproduction cells",
        "example2": "the two-dimensional reproduction case",
        "mms-convergence": "manufactured-solution refinement study",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_options(args):
    """Fill unset flags from the environment and validate them."""
    if args.command is None:
        raise UsageError("a command is required: " + ", ".join(COMMANDS))
    if args.config is None:
        args.config = _env("config")
    if args.out is None:
        args.out = _env("out") or os.path.join("tvfrac_out", args.command)
    if args.seed is None:
        args.seed = _env_int("seed", 0)
    if args.jobs is None:
        args.jobs = _env_int("jobs", 1) or os.cpu_count() or 1
    if args.repeats is None:
        args.repeats = _env_int("repeats", 1) or 1
    if args.strict_step_condition is None:
        args.strict_step_condition = _env_flag("strict-step-condition")
    if args.gradient_mode is None:
        args.gradient_mode = _env_choice("gradient-mode", GRADIENT_MODES)
    if args.dual_point is None:
        args.dual_point = _env_choice("dual-point", DUAL_POINTS)
    return args


def _apply_overrides(cfg, args):
    updates = {}
    if args.seed is not None:
        updates["rng_seed"] = args.seed
    if args.gradient_mode is not None:
        updates["gradient_mode"] = args.gradient_mode
    if args.dual_point is not None:
        updates["dual_update_point"] = args.dual_point
    if args.strict_step_condition:
        updates["strict_step_condition"] = True
    return replace(cfg, **updates) if updates else cfg


def _base_config(args, default):
    cfg = load_config(args.config) if args.config else default
    return _apply_overrides(cfg, args)


def _write_json(obj, path):
    emit_summary(obj, path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_forward(args):
    cfg = _base_config(args, presets.example1())
    disc, omega, mass_omega, mu = setup(cfg)
    mesh = disc.mesh
    f = build_true_source(mesh, cfg.f_star_box, cfg.f_star_amplitude)
    traj = forward_solve(disc, SourceSeparable(mu, f))
    U = traj.states
    K = disc.K
    snaps = sorted({K // 4, K // 2, (3 * K) // 4, K} - {0})
    os.makedirs(args.out, exist_ok=True)
    coord_cols = ["x", "y"][: mesh.dim]
    rows = []
    for i, xy in enumerate(mesh.node_coords):
        rec = {c: float(v) for c, v in zip(coord_cols, xy)}
        rec["f"] = float(f[i])
        for k in snaps:
            rec[f"u_k{k}"] = float(U[k, i])
        rows.append(rec)
    cols = coord_cols + ["f"] + [f"u_k{k}" for k in snaps]
    emit_table(rows, os.path.join(args.out, "forward_fields.tsv"), columns=cols)

    f_norm = float(np.sqrt(f @ (disc.mass @ f)))
    u_full = float(np.sqrt(np.sum(weighted_sq_norms(disc.grid, disc.mass, U))))
    u_omega = float(np.sqrt(np.sum(weighted_sq_norms(disc.grid, mass_omega, U))))
    try:
        stab = stability_check(disc, traj, f)
    except UndefinedRatio:
        stab = None
    summary = {
        "command": "forward", "config_digest": cfg.digest(), "alpha": cfg.alpha, "boundary": cfg.boundary,
        "dim": cfg.dim, "n_per_axis": cfg.n_per_axis, "K_tau": cfg.K_tau,
        "snapshot_levels": snaps, "f_norm": f_norm, "u_norm_full": u_full, "u_norm_omega": u_omega,
        "forward_ratio_full": u_full / f_norm if f_norm > 0 else None,
        "stability_ratio": stab,
        "max_abs_u": float(np.abs(U).max()),
    }
    if cfg.dim == 1 and cfg.alpha in presets.FORWARD_RATIO:
        summary["quoted_forward_ratio"] = presets.FORWARD_RATIO[cfg.alpha]
    _write_json(summary, os.path.join(args.out, "forward_summary.json"))
    ratio = summary["forward_ratio_full"]
    print(f"forward: alpha={cfg.alpha} boundary={cfg.boundary} ||u||/||f|| = "
          + (f"{ratio:.4e}" if ratio is not None else "undefined (zero source)"))
    return EXIT_OK


def _small_overrides(args):
    """alpha / n / K_tau from a config file, if one was given, for the small checks."""
    if not args.config:
        return {}
    cfg = load_config(args.config)
    return {"alpha": cfg.alpha, "n": cfg.n_per_axis, "K": cfg.K_tau}


def _finish_check(name, reports, args):
    os.makedirs(args.out, exist_ok=True)
    passed = all(r["passed"] for r in reports)
    _write_json({"command": name, "passed": passed, "reports": reports}, os.path.join(args.out, f"{name}_report.json"))
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_adjoint_check(args):
    over = _small_overrides(args)
    mode = args.gradient_mode or "transpose"
    seed = args.seed or 0
    alphas = (over["alpha"],) if over else (0.3, 0.5, 0.8)
    reports = []
    for a in alphas:
        r = verify.adjoint_identity_check(a, n=over.get("n", 10), K=over.get("K", 10), seed=seed, mode=mode)
        reports.append(r)
        print(f"adjoint-check alpha={a} mode={mode}: max defect {r['max_defect']:.3e} "
              f"(tol {r['tol']:.0e}) {'PASS' if r['passed'] else 'FAIL'}")
    return _finish_check("adjoint-check", reports, args)


def cmd_gradient_check(args):
    over = _small_overrides(args)
    mode = args.gradient_mode or "transpose"
    r = verify.gradient_fd_check(alpha=over.get("alpha", 0.5), n=over.get("n", 20), K=over.get("K", 20),
                                 seed=args.seed or 0, mode=mode)
    print(f"gradient-check mode={mode}: max relative error {r['max_rel_error']:.3e} "
          f"(tol {r['tol']:.0e}) {'PASS' if r['passed'] else 'FAIL'}")
    return _finish_check("gradient-check", [r], args)


def cmd_norm_estimate(args):
    reports = []
    if args.config:
        cfgs = [(load_config(args.config), None)]
    else:
        cfgs = [(presets.example1(alpha=a), ref) for a, ref in sorted(presets.FORWARD_RATIO.items())]
    for cfg, ref in cfgs:
        r = verify.norm_estimate_check(cfg, reference=ref)
        reports.append(r)
        extra = f" reference {ref} (x0.95)" if ref is not None else ""
        print(f"norm-estimate alpha={cfg.alpha}: c = {r['c_estimate']:.4e}, ratio at f* = "
              f"{r['ratio_at_f_star']:.4e}{extra} {'PASS' if r['passed'] else 'FAIL'}")
    return _finish_check("norm-estimate", reports, args)


def cmd_mms_convergence(args):
    r = verify.mms_convergence()
    for a, t in r["temporal"].items():
        print(f"mms temporal alpha={a}: orders " + ", ".join(f"{o:.3f}" for o in t["orders"])
              + (" PASS" if t["passed"] else " FAIL"))
    s = r["spatial"]
    print("mms spatial: orders " + ", ".join(f"{o:.3f}" for o in s["orders"]) + (" PASS" if s["passed"] else " FAIL"))
    return _finish_check("mms-convergence", [r], args)


def cmd_invert(args):
    cfg = _base_config(args, presets.example1())
    setup(cfg)  # surface alignment problems before any output exists
    result = run_experiment(cfg)
    write_artifacts(result, args.out, stem="invert")
    row = result.row
    print(f"invert: n={row.n} stop={row.stop_reason} e_r={row.e_r:.4e} "
          f"res_norm={row.res_norm:.4e} delta={row.delta:.4e}")
    return EXIT_OK


TABLE1_COLUMNS = (
    "alpha", "omega", "gamma", "delta_rel", "seed", "n", "e_r", "res", "res_norm", "delta", "stop_reason",
    "paper_n", "paper_e_r", "paper_res", "wall_time",
)
MEANS_COLUMNS = (
    "alpha", "omega", "gamma", "delta_rel", "seeds", "mean_n", "mean_e_r", "mean_res_norm", "mean_delta",
    "paper_n", "paper_e_r", "paper_res",
)


def run_cell(cfg):
    """Worker entry: run one config, never raising on divergence."""
    t0 = time.perf_counter()
    try:
        row = run_experiment(cfg).row.as_table_row()
    except DivergenceError as exc:
        row = {c: "" for c in TABLE_COLUMNS}
        row.update(alpha=cfg.alpha, gamma=cfg.gamma, delta_rel=cfg.delta_rel, seed=cfg.rng_seed,
                   stop_reason="diverged", error=str(exc))
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_table1(seeds, jobs=1, overrides=None):
    """All 18 cells for every seed; returns per-seed rows in table order."""
    tasks = []
    for seed in seeds:
        for cfg, ref in presets.table1_cells(seed):
            if overrides:
                cfg = replace(cfg, **overrides)
            tasks.append((cfg, ref))
    if jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, [t[0] for t in tasks]))
    else:
        results = [run_cell(t[0]) for t in tasks]
    rows = []
    for (cfg, ref), row in zip(tasks, results):
        row.update(ref)
        row["omega"] = cfg.omega_label
        if row["wall_time"] > SLOW_CELL_SECONDS:
            log.warning("cell alpha=%s omega=%s delta_rel=%s seed=%s took %.0f s",
                        cfg.alpha, cfg.omega_label, cfg.delta_rel, cfg.rng_seed, row["wall_time"])
        rows.append(row)
    return rows


def seed_means(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r["alpha"], r["omega"], r["delta_rel"]), []).append(r)
    out = []
    for (alpha, omega, delta_rel), grp in groups.items():
        ok = [g for g in grp if g["stop_reason"] != "diverged"]

        def mean(key):
            return statistics.fmean(g[key] for g in ok) if ok else float("nan")

        out.append({
            "alpha": alpha, "omega": omega, "gamma": grp[0]["gamma"], "delta_rel": delta_rel, "seeds": len(ok),
            "mean_n": mean("n"), "mean_e_r": mean("e_r"), "mean_res_norm": mean("res_norm"),
            "mean_delta": mean("delta"), "paper_n": grp[0]["paper_n"], "paper_e_r": grp[0]["paper_e_r"],
            "paper_res": grp[0]["paper_res"],
        })
    return out


def _pd_overrides(args):
    over = {}
    if args.gradient_mode:
        over["gradient_mode"] = args.gradient_mode
    if args.dual_point:
        over["dual_update_point"] = args.dual_point
    if args.strict_step_condition:
        over["strict_step_condition"] = True
    return over


def cmd_table1(args):
    if args.config:
        raise UsageError("table1 runs built-in settings and takes no --config")
    base = presets.DEFAULT_SEED if args.seed is None else args.seed
    seeds = [base + i for i in range(args.repeats)]
    rows = run_table1(seeds, args.jobs, _pd_overrides(args))
    os.makedirs(args.out, exist_ok=True)
    emit_table(rows, os.path.join(args.out, "table1.tsv"), columns=TABLE1_COLUMNS)
    emit_table(seed_means(rows), os.path.join(args.out, "table1_means.tsv"), columns=MEANS_COLUMNS)
    for r in rows:
        er = f"{r['e_r']:.4f}" if r["stop_reason"] != "diverged" else "-"
        print(f"alpha={r['alpha']} omega={r['omega']} delta_rel={r['delta_rel']} seed={r['seed']}: "
              f"n={r['n']} (ref {r['paper_n']}) e_r={er} (ref {r['paper_e_r']}) stop={r['stop_reason']}")
    return EXIT_DIVERGED if any(r["stop_reason"] == "diverged" for r in rows) else EXIT_OK


def cmd_example2(args):
    if args.config:
        raise UsageError("example2 runs built-in settings and takes no --config")
    base = presets.DEFAULT_SEED if args.seed is None else args.seed
    cfgs = [_apply_overrides(presets.example2(base + i), args) for i in range(args.repeats)]
    cfgs = [replace(c, rng_seed=base + i) for i, c in enumerate(cfgs)]
    os.makedirs(args.out, exist_ok=True)
    runs = []
    for cfg in cfgs:
        result = run_experiment(cfg)
        write_artifacts(result, args.out, stem=f"example2_seed{cfg.rng_seed}")
        runs.append(result.row.as_table_row())
    summary = {
        "command": "example2",
        "runs": [{k: r[k] for k in ("seed", "n", "e_r", "res", "res_norm", "delta", "stop_reason")} for r in runs],
        "median_e_r": statistics.median(r["e_r"] for r in runs),
        "median_delta": statistics.median(r["delta"] for r in runs),
        "reference": presets.EXAMPLE2_REFERENCE,
    }
    _write_json(summary, os.path.join(args.out, "example2_summary.json"))
    ref = presets.EXAMPLE2_REFERENCE
    for r in runs:
        print(f"example2 seed={r['seed']}: n={r['n']} (ref {ref['n']}) e_r={r['e_r']:.4f} (ref {ref['e_r']}) "
              f"res_norm={r['res_norm']:.4e} (ref res {ref['res']}) delta={r['delta']:.4e} (ref {ref['delta']})")
    return EXIT_OK


HANDLERS = {
    "forward": cmd_forward,
    "gradient-check": cmd_gradient_check,
    "adjoint-check": cmd_adjoint_check,
    "norm-estimate": cmd_norm_estimate,
    "invert": cmd_invert,
    "table1": cmd_table1,
    "example2": cmd_example2,
    "mms-convergence": cmd_mms_convergence,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = resolve_options(parser.parse_args(argv))
    except UsageError as exc:
        print(f"tvfrac: usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"tvfrac: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, AlignmentError, InvalidArgument) as exc:
        print(f"tvfrac: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"tvfrac: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

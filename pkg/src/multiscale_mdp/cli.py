"""Command-line entry point.

Usage::

    multiscale-mdp <subcommand> [--config PATH] [--seed N] [--out DIR] [--set key=value ...]

Exit codes: 0 success, 1 failed validation (bad config or failed
conditions), 2 usage error, 3 numerical blow-up (a diagnostics file is
written next to the output directory).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, kernels
from .artifacts import RunDirectory, csv_text, emit_plot_data, manifest_hash, write_manifest
from .averaging import (
    estimate_abar,
    estimate_invariant,
    estimate_mixing,
    khasminskii_sweep,
    solve_averaged_ode,
)
from .config import ExperimentConfig, load_config
from .deviations import (
    ControlPair,
    MdpSweepRow,
    mdp_sweep,
    path_from_function,
    rate_function,
    rate_function_bruteforce,
    solve_skeleton,
)
from .engine import BlowUpError, IntegratorConfig, integrate_multiscale
from .model import ConfigurationError, condition_table, validate_conditions
from .rng import Streams, stream

SUBCOMMANDS = (
    "validate",
    "simulate",
    "invariant",
    "abar",
    "averaged",
    "khasminskii",
    "skeleton",
    "rate",
    "mdp-sweep",
)


class Context:
    def __init__(self, name: str, cfg: ExperimentConfig, out: Path):
        self.name = name
        self.cfg = cfg
        self.out = out
        self.hash = manifest_hash(name, cfg.tree, cfg.seed)
        self.extra: dict = {}

    def csv(self, run: RunDirectory, filename: str, header, rows) -> None:
        run.write_text(filename, csv_text(header, rows, self.hash))


# --------------------------------------------------------------------------
# subcommands; each returns an exit code and stages files into ``run``


def _conditions(ctx: Context, probes: int):
    cs = ctx.cfg.model()
    return validate_conditions(cs, probes, stream(ctx.cfg.seed, "probe"), ctx.cfg.chi())


def _cmd_validate(ctx: Context, run: RunDirectory) -> int:
    reports = _conditions(ctx, int(ctx.cfg["validate"]["probes"]))
    print(condition_table(reports))
    ctx.csv(
        run,
        "conditions.csv",
        ["condition_id", "passed", "worst_ratio", "probes", "witness"],
        [[r.condition_id, r.passed, float(r.worst_ratio), r.probes, r.witness] for r in reports],
    )
    ctx.extra["conditions"] = [r.row() for r in reports]
    return 0 if all(r.passed for r in reports) else 1


def _integrator(cfg: ExperimentConfig) -> IntegratorConfig:
    it = cfg["integrator"]
    return IntegratorConfig(
        epsilon=float(it["epsilon"]),
        dt=float(it["dt"]),
        T=float(it["T"]),
        delay_tau=float(it["tau"]),
        seed=int(it["seed"]),
        localization_radius=None if it["localization_radius"] is None else float(it["localization_radius"]),
        allow_coarse_dt=bool(it["allow_coarse_dt"]),
    )


def _cmd_simulate(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    cs = cfg.model()
    icfg = _integrator(cfg)
    rows = []
    for i in range(int(cfg["integrator"]["paths"])):
        res = integrate_multiscale(cs, icfg, cfg.chi(), cfg.y0(), Streams(cfg.seed, i))
        res.slow.to_csv(run.path(f"trajectory_{i}.csv"), f"manifest: {ctx.hash}")
        res.fast.to_csv(run.path(f"fast_{i}.csv"), f"manifest: {ctx.hash}")
        rows.append([i, -1.0 if res.exit_time is None else res.exit_time, len(res.jumps), float(res.slow.right[-1, 0])])
    ctx.csv(run, "paths.csv", ["path", "exit_time", "n_jumps", "x_T"], rows)
    return 0


def _cmd_invariant(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    av = cfg["averaging"]
    cs = cfg.model()
    est = estimate_invariant(
        cs, cfg.zeta(), float(av["T_run"]), av["burn_in"], float(av["dt"]), Streams(cfg.seed), [0.0]
    )
    cov = est.covariance
    rows = [
        ["mean", float(est.mean[0]), float(est.ci_halfwidth[0])],
        ["second_moment", float(est.second_moment[0, 0]), float(est.second_moment_ci[0, 0])],
        ["variance", float(cov[0, 0]), float(est.second_moment_ci[0, 0])],
        ["n_effective", float(est.n_effective), math.nan],
        ["burn_in", float(est.burn_in), math.nan],
    ]
    ctx.csv(run, "invariant.csv", ["quantity", "value", "ci_halfwidth"], rows)
    print(f"variance {cov[0, 0]:.6g}  mean {est.mean[0]:.4g} +- {est.ci_halfwidth[0]:.3g}")
    return 0


def _cmd_abar(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    av = cfg["averaging"]
    cs = cfg.model()
    zeta = cfg.zeta()
    est = estimate_abar(
        cs, zeta, float(av["T_run"]), av["burn_in"], int(av["replicas"]), float(av["dt"]),
        Streams(cfg.seed), workers=cfg.workers,
    )
    analytic = float(cs.abar_analytic(zeta)[0]) if cs.abar_analytic else math.nan
    ctx.csv(
        run,
        "abar_probe.csv",
        ["zeta", "value", "ci", "analytic"],
        [[f"const({float(av['zeta'])!r})", float(est.value[0]), float(est.ci[0]), analytic]],
    )
    rows = estimate_mixing(
        cs, zeta, [float(av["y0"])], av["T_grid"], int(av["mixing_replicas"]), float(av["mixing_dt"]),
        Streams(cfg.seed + 1), workers=cfg.workers,
    )
    ctx.csv(run, "mixing.csv", ["T", "alpha_hat", "ci_lo", "ci_hi"], [[r.T, r.alpha_hat, r.ci_lo, r.ci_hi] for r in rows])
    print(f"abar {est.value[0]:.6g} +- {est.ci[0]:.3g} (analytic {analytic:.6g})")
    return 0


def _cmd_averaged(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    cs = cfg.model()
    it = cfg["integrator"]
    path = solve_averaged_ode(cs.abar_analytic, cfg.chi(), float(it["T"]), float(it["dt"]), tau=float(it["tau"]))
    path.to_csv(run.path("averaged.csv"), f"manifest: {ctx.hash}")
    return 0


def _cmd_khasminskii(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    kh = cfg["khasminskii"]
    rows = khasminskii_sweep(
        cfg.model(), kh["eps_grid"], cfg.chi(), cfg.y0(), cfg.khasminskii(), int(kh["n_paths"]), cfg.seed,
        T=float(cfg["integrator"]["T"]), dt_ratio=float(kh["dt_ratio"]), workers=cfg.workers,
    )
    ctx.csv(
        run,
        "khasminskii.csv",
        ["epsilon", "dev_hat_X", "dev_Y_mean", "dev_segment", "a_eps", "n_localized"],
        [[r["epsilon"], r["dev_hat_X"], r["dev_Y_mean"], r["dev_segment"], r["a_eps"], r["n_localized"]] for r in rows],
    )
    return 0


def _xbar(cfg: ExperimentConfig, cs, dt: float):
    it = cfg["integrator"]
    return solve_averaged_ode(cs.abar_analytic, cfg.chi(), float(it["T"]), dt, tau=float(it["tau"]))


def _cmd_skeleton(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    cs = cfg.model()
    dt = float(cfg["deviations"]["dt"])
    xbar = _xbar(cfg, cs, dt)
    n = int(round(float(cfg["integrator"]["T"]) / dt)) + 1
    sk = cfg["deviations"]["skeleton"]
    ctrl = ControlPair(dt, np.full((n, cs.d), float(sk["f"])), lam=np.full((n, cs.d), float(sk["lam"])))
    path = solve_skeleton(cs, xbar, ctrl, dt)
    path.to_csv(run.path("skeleton.csv"), f"manifest: {ctx.hash}")
    ctx.extra["control_cost"] = ctrl.cost(cs, xbar)
    return 0


def _cmd_rate(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    cs = cfg.model()
    dv = cfg["deviations"]
    dt = float(dv["dt"])
    T, tau = float(cfg["integrator"]["T"]), float(cfg["integrator"]["tau"])
    xbar = _xbar(cfg, cs, dt)
    rows = []
    for target in dv["targets"]:
        coeffs = [float(c) for c in target["coeffs"]]
        eta = path_from_function(lambda t, c=coeffs: sum(ck * t ** (k + 1) for k, ck in enumerate(c)), T, dt, tau, cs.d)
        res = rate_function(cs, xbar, eta, dt)
        row = [target["id"], res.value, res.residual_norm]
        if dv["bruteforce"]:
            bf = rate_function_bruteforce(cs, xbar, eta, dt, int(dv["mark_nodes"]))
            row += [bf.value]
        rows.append(row)
        print(f"{target['id']}: I = {res.value:.10g}")
    header = ["target_id", "value", "residual_norm"] + (["bruteforce_value"] if dv["bruteforce"] else [])
    ctx.csv(run, "rate.csv", header, rows)
    return 0


def _cmd_mdp_sweep(ctx: Context, run: RunDirectory) -> int:
    cfg = ctx.cfg
    sw = cfg["sweep"]
    rows = mdp_sweep(
        cfg.model(), cfg.chi(), cfg.y0(), sw["eps_grid"], float(sw["delta"]), cfg.khasminskii(),
        int(sw["n_paths"]), float(sw["dt_ratio"]), Streams(cfg.seed),
        T=float(cfg["integrator"]["T"]), delta_avg=float(sw["delta_avg"]), workers=cfg.workers,
    )
    text = csv_text(MdpSweepRow.CSV_HEADER.split(","), [], ctx.hash)
    text += "".join(r.csv_row() + "\n" for r in rows)
    run.write_text("mdp_sweep.csv", text)
    for r in rows:
        print(r.csv_row())
    return 0


_HELP = {
    "validate": "check the structural conditions on random probes",
    "simulate": "integrate the slow-fast system and write trajectories",
    "invariant": "estimate the frozen invariant measure of the fast process",
    "abar": "tabulate the averaged drift",
    "averaged": "solve the averaged delay equation",
    "khasminskii": "compare the original and block-frozen slow paths",
    "skeleton": "solve the controlled skeleton equation",
    "rate": "evaluate the moderate deviation rate at a target path",
    "mdp-sweep": "estimate tail probabilities along an epsilon sweep",
}

COMMANDS: dict[str, Callable[[Context, RunDirectory], int]] = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "invariant": _cmd_invariant,
    "abar": _cmd_abar,
    "averaged": _cmd_averaged,
    "khasminskii": _cmd_khasminskii,
    "skeleton": _cmd_skeleton,
    "rate": _cmd_rate,
    "mdp-sweep": _cmd_mdp_sweep,
}


# --------------------------------------------------------------------------
# driver


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multiscale-mdp", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="subcommand")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=_HELP.get(name))
        sp.add_argument("--config", help="YAML config (defaults apply to missing keys)")
        sp.add_argument("--seed", type=int, help="overrides integrator.seed")
        sp.add_argument("--out", help="output root; overrides outputs.dir")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-path override")
    pp = sub.add_parser("plot-data", help="turn a CSV artifact into gnuplot data")
    pp.add_argument("artifact")
    pp.add_argument("--kind", required=True, choices=["trajectory", "sweep", "mixing"])
    pp.add_argument("--out", help="directory for the .dat and .gp files")
    return p


def _attach_conditions(ctx: Context) -> list[str]:
    probes = max(100, int(ctx.cfg["validate"]["attach_probes"]))
    return [r.row() for r in _conditions(ctx, probes)]


def run_subcommand(name: str, config_path=None, overrides=(), seed=None, out=None) -> int:
    """Run one subcommand; returns the process exit code."""
    if name not in COMMANDS:
        print(f"unknown subcommand {name!r}", file=sys.stderr)
        return 2
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"integrator.seed={int(seed)}")
    try:
        cfg = load_config(config_path, overrides)
    except (ConfigurationError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    root = Path(out if out is not None else cfg["outputs"]["dir"])
    ctx = Context(name, cfg, root)
    try:
        with RunDirectory(root, name) as run:
            code = COMMANDS[name](ctx, run)
            if "json" in cfg["outputs"]["formats"]:
                run.write_text("config.yaml", cfg.dump())
                info = {
                    "manifest_hash": ctx.hash,
                    "config_hash": cfg.digest(),
                    "seed": cfg.seed,
                    "subcommand": name,
                    "tool_version": __version__,
                    "kernel_backend": kernels.backend_name(),
                    "conditions": ctx.extra.pop("conditions", None) or _attach_conditions(ctx),
                    **ctx.extra,
                }
                write_manifest(run, info)
    except BlowUpError as exc:
        diag = root / f"{name}.diagnostics.json"
        root.mkdir(parents=True, exist_ok=True)
        diag.write_text(json.dumps({"error": str(exc), "last_time": exc.last_time, "subcommand": name}, indent=2) + "\n")
        print(f"blow-up: {exc} (diagnostics in {diag})", file=sys.stderr)
        return 3
    except ConfigurationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "plot-data":
        try:
            path = emit_plot_data(args.artifact, args.kind, args.out)
        except (ValueError, OSError) as exc:
            print(str(exc), file=sys.stderr)
            return 1
        print(path)
        return 0
    return run_subcommand(args.command, args.config, args.set, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())

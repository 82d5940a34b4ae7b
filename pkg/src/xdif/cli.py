"""Command-line driver: check-params, simulate, sweep, entropy-report.

Exit codes: 0 ok, 1 configuration error, 2 regime conditions fail,
3 abnormal termination (blow-up, step underflow, state cap, or any sweep
point that ended early).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, dump_config, load_config
from .entropy import monitors
from .galerkin import (NonFiniteError, RingingError, integrate, read_trajectory, write_trajectory,
                       write_trajectory_csv, fmt)
from .model import ModelParams, RegularizationLevel, build_coefficients, check_conditions
from .sweeps import estimate_rates, json_clean, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_CONDITIONS, EXIT_ABNORMAL = 0, 1, 2, 3


def _out_dir(args, cfg: Optional[RunConfig]) -> Path:
    env = os.environ.get("XDIF_OUT")
    if env:
        return Path(env)
    if args.out:
        return Path(args.out)
    return Path(cfg.output.directory if cfg is not None else "xdif-out")


def _dump_json(obj, stream=None):
    stream = stream or sys.stdout
    json.dump(json_clean(obj), stream, indent=2, sort_keys=True, allow_nan=False)
    stream.write("\n")


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        _dump_json(obj, fh)


def _echo_config(cfg: RunConfig, out: Path, fmt_: str):
    suffix = "json" if fmt_ == "json" else "toml"
    (out / f"config.{suffix}").write_text(dump_config(cfg, suffix))


def cmd_check_params(cfg: RunConfig, args) -> int:
    report = check_conditions(cfg.params, s_max=cfg.conditions.s_max, grid_points=cfg.conditions.grid_points)
    doc = report.to_dict()
    failing = report.failing_conditions()
    doc["failing_conditions"] = failing
    _dump_json(doc)
    if failing:
        print("conditions failing: " + ", ".join(failing), file=sys.stderr)
        return EXIT_CONDITIONS
    return EXIT_OK


def _entropy_outputs(traj, coeffs, level, domain, out: Path, form: str):
    report = monitors(traj, coeffs, level, domain, form=form)
    with open(out / "entropy.csv", "w", newline="") as fh:
        report.write_csv(fh)
    summary = report.summary()
    summary.update({"termination": traj.termination.value, "termination_time": traj.termination_time,
                    "accepted_steps": traj.accepted, "rejected_steps": traj.rejected})
    _write_json(out / "summary.json", summary)
    return summary


def _verdict(summary: dict) -> str:
    return ("termination={termination} t={t} max_inequality_residual={ineq} "
            "max_identity_residual_normalized={ident} mass_drift={drift}").format(
        termination=summary["termination"], t=fmt(summary["termination_time"]),
        ineq=fmt(summary["max_inequality_residual"]) if summary["max_inequality_residual"] is not None else "n/a",
        ident=fmt(summary["max_identity_residual_normalized"]), drift=fmt(summary["mass_drift"]))


def cmd_simulate(cfg: RunConfig, args) -> int:
    if cfg.level is None:
        raise ConfigError("simulate needs a [RegularizationLevel] table")
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out, args.format)
    diag = cfg.diagnostics
    coeffs = build_coefficients(cfg.params, cfg.level, diffusion=diag.diffusion)
    try:
        w0, z0 = cfg.initial.prepare(cfg.domain, cfg.level.k)
    except (RingingError, ValueError, OSError) as exc:
        raise ConfigError(f"[InitialData] {exc}") from exc
    method = "matrix" if cfg.output.deterministic else diag.transform
    traj = integrate((w0, z0), coeffs, cfg.level, cfg.domain, cfg.solver,
                     allow_zero_epsilon=diag.allow_zero_epsilon, method=method)
    with open(out / "trajectory.xdif", "wb") as fh:
        write_trajectory(fh, traj)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        write_trajectory_csv(fh, traj)
    summary = _entropy_outputs(traj, coeffs, cfg.level, cfg.domain, out, diag.dissipation_form)
    print(_verdict(summary))
    return EXIT_OK if traj.ok else EXIT_ABNORMAL


def cmd_sweep(cfg: RunConfig, args) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a [SweepPlan] table")
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out, args.format)
    try:
        diag = run_sweep(cfg.sweep, jobs=max(1, args.jobs), out_dir=out)
    except (RingingError, OSError) as exc:
        raise ConfigError(f"[InitialData] {exc}") from exc
    print(f"axis={diag.axis}")
    print("t,point_a,point_b,distance,max_neg_mass_u_b")
    for t, a, b, du, dv, d in diag.distances:
        print(",".join([fmt(t), str(a), str(b), fmt(d), fmt(diag.points[b].max_neg_mass_u)]))
    print("hash,termination,max_neg_mass_u,max_neg_mass_v")
    for p in diag.points:
        print(",".join([p.digest, p.termination.value, fmt(p.max_neg_mass_u), fmt(p.max_neg_mass_v)]))
    if len(diag.points) >= 3:
        print("t,axis,slope,residual,status")
        for t, r in estimate_rates(diag).items():
            print(",".join([fmt(t), r.axis, fmt(r.slope) if r.slope is not None else "",
                            fmt(r.residual) if r.residual is not None else "", r.status]))
    return EXIT_ABNORMAL if diag.abnormal else EXIT_OK


def cmd_entropy_report(args) -> int:
    try:
        with open(args.trajectory, "rb") as fh:
            traj = read_trajectory(fh)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read trajectory {args.trajectory}: {exc}") from exc
    meta = traj.metadata
    params = ModelParams(**meta["params"])
    level = RegularizationLevel(**meta["level"])
    coeffs = build_coefficients(params, level, diffusion=meta.get("diffusion", True))
    out = _out_dir(args, None)
    out.mkdir(parents=True, exist_ok=True)
    summary = _entropy_outputs(traj, coeffs, level, traj.domain, out, args.form)
    print(_verdict(summary))
    return EXIT_OK if traj.ok else EXIT_ABNORMAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xdif", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="run configuration (TOML or JSON)")
        p.add_argument("--out", help="output directory (XDIF_OUT overrides)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--deterministic", action="store_true",
                       help="pin the transform path and reduction order for bit-identical output")
        p.add_argument("--format", choices=("json", "toml"), default=None,
                       help="config format (default: from the file suffix)")

    common(sub.add_parser("check-params", help="classify the parameter regime"))
    common(sub.add_parser("simulate", help="integrate one regularized Galerkin system"))
    common(sub.add_parser("sweep", help="run a regularization-limit sweep"))
    rep = sub.add_parser("entropy-report", help="recompute entropy diagnostics for a saved trajectory")
    rep.add_argument("trajectory", help="trajectory.xdif written by simulate")
    rep.add_argument("--form", choices=("eps_delta", "limit"), default="eps_delta")
    common(rep, needs_config=False)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "entropy-report":
            return cmd_entropy_report(args)
        cfg = load_config(args.config, args.format)
        if args.deterministic and not cfg.output.deterministic:
            cfg = replace(cfg, output=replace(cfg.output, deterministic=True))
        if args.format is None:
            args.format = "json" if str(args.config).endswith(".json") else "toml"
        handler = {"check-params": cmd_check_params, "simulate": cmd_simulate, "sweep": cmd_sweep}[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        print(f"abnormal termination: {exc}", file=sys.stderr)
        return EXIT_ABNORMAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line front end.

Subcommands: validate-config, simulate (open loop), linearize (model bank),
step-response, run (closed loop).  Every command takes --config and writes
its outputs plus a manifest.json into --out.  Exit codes: 0 success, 2 for
configuration problems, 3 for numeric failures during a run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import default_config_path, load_config
from .errors import ConfigurationError, InvalidParameterError, NumericError, RangeError
from .harness import RunConfig, build_bank_for_run, run, write_csv
from .integrator import simulate_open_loop
from .linmodel import CELSIUS_ZERO


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        return args.handler(cfg, args)
    except (ConfigurationError, InvalidParameterError, RangeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmadmc",
        description=(
            "Batch MMA polymerization: nonlinear reactor simulation, local "
            "linear model bank, and gain-switched predictive temperature "
            "control."),
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help=f"run configuration YAML (packaged default: "
                            f"{default_config_path()})")
        p.add_argument("--out", default=".",
                       help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario noise seed")
        p.add_argument("--no-noise", action="store_true",
                       help="force noise_std to zero for this run")
        p.set_defaults(handler=func)
        return p

    add("validate-config", _cmd_validate, "parse and cross-check a config")
    add("simulate", _cmd_simulate,
        "open-loop batch at the bank warm-up power")
    add("linearize", _cmd_linearize,
        "build the local model bank and dump it as JSON")
    add("step-response", _cmd_step_response,
        "sampled step responses of every bank model")
    add("run", _cmd_run, "closed-loop batch under the scheduled controller")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    scenario = cfg.scenario
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    if args.no_noise:
        scenario = dataclasses.replace(scenario, noise_std=0.0)
    if scenario is not cfg.scenario:
        cfg = dataclasses.replace(cfg, scenario=scenario)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(outdir: Path, cfg: RunConfig, args, outputs,
                    metrics=None) -> None:
    manifest = {
        "tool": "mmadmc",
        "version": __version__,
        "command": args.command,
        "config": str(Path(args.config).resolve()),
        "seed": cfg.scenario.seed,
        "noise_std": cfg.scenario.noise_std,
        "outputs": sorted(outputs),
    }
    if metrics is not None:
        manifest["metrics"] = metrics
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _cmd_validate(cfg: RunConfig, args) -> int:
    s = cfg.scenario
    print(f"config OK: {Path(args.config).resolve()}")
    print(f"  batch {s.t_batch:.0f} s, sample {cfg.dmc.ts:.0f} s, "
          f"{len(cfg.bank.breakpoints)} models, "
          f"{cfg.schedule.n_entries} schedule entries")
    print(f"  horizons P={cfg.dmc.p_horizon} M={cfg.dmc.m_horizon}, "
          f"alpha={cfg.dmc.alpha}, r={cfg.dmc.r_weight}, "
          f"u in [{cfg.dmc.u_min:.0f}, {cfg.dmc.u_max:.0f}] W")
    return 0


def _cmd_simulate(cfg: RunConfig, args) -> int:
    outdir = _outdir(args)
    period = cfg.integrator.sample_period
    n = max(1, int(round(cfg.scenario.t_batch / period)))
    profile = [cfg.bank.warmup_power] * n
    result = simulate_open_loop(
        cfg.scenario.initial_state, profile, cfg.params, cfg.integrator)
    lines = ["t,u,x,i_conc,T_reactor,T_jacket"]
    for k, state in enumerate(result.states):
        u = profile[min(k, n - 1)]
        lines.append(
            f"{k * period:.10g},{u:.10g},{state.x:.12g},{state.i_conc:.12g},"
            f"{state.t_reactor - CELSIUS_ZERO:.12g},"
            f"{state.t_jacket - CELSIUS_ZERO:.12g}")
    path = outdir / "openloop.csv"
    path.write_text("\n".join(lines) + "\n")
    final = result.final
    print(f"open loop: {n} samples at {cfg.bank.warmup_power:.0f} W, final "
          f"x={final.x:.4f}, T={final.t_reactor - CELSIUS_ZERO:.2f} C")
    print(f"wrote {path}")
    _write_manifest(outdir, cfg, args, [path.name])
    return 0


def _model_record(i, model) -> dict:
    eig = np.linalg.eigvals(model.a_mat)
    op = model.op
    return {
        "index": i,
        "time_s": None if op is None else op.time_s,
        "state": None if op is None else dict(op.state_s._asdict()),
        "power_w": None if op is None else op.power_s,
        "a_mat": model.a_mat.tolist(),
        "b_vec": model.b_vec.tolist(),
        "c_vec": model.c_vec.tolist(),
        "tf_num": model.tf_num.tolist(),
        "tf_den": model.tf_den.tolist(),
        "dc_gain": model.dc_gain,
        "integrating": model.integrating,
        "stable": model.stable,
        "n_settle": model.n_settle,
        "ts": model.ts,
        "eig_real": eig.real.tolist(),
        "eig_imag": eig.imag.tolist(),
    }


def _cmd_linearize(cfg: RunConfig, args) -> int:
    outdir = _outdir(args)
    bank = build_bank_for_run(cfg)
    records = [_model_record(i, m) for i, m in enumerate(bank)]
    path = outdir / "bank.json"
    path.write_text(json.dumps(records, indent=2) + "\n")
    for rec in records:
        print(f"model {rec['index']}: t={rec['time_s']:.0f} s, "
              f"dc gain={rec['dc_gain']:.6g} C/W, "
              f"settles in {rec['n_settle']} samples, "
              f"stable={rec['stable']}")
    print(f"wrote {path}")
    _write_manifest(outdir, cfg, args, [path.name])
    return 0


def _cmd_step_response(cfg: RunConfig, args) -> int:
    outdir = _outdir(args)
    bank = build_bank_for_run(cfg)
    lines = ["model,k,t,g"]
    for i, model in enumerate(bank):
        for k, g in enumerate(model.step_resp, start=1):
            lines.append(f"{i},{k},{k * model.ts:.10g},{g:.12g}")
    path = outdir / "step_response.csv"
    path.write_text("\n".join(lines) + "\n")
    for i, model in enumerate(bank):
        print(f"model {i}: {len(model.step_resp)} samples, "
              f"dc gain {model.dc_gain:.6g} C/W")
    print(f"wrote {path}")
    _write_manifest(outdir, cfg, args, [path.name])
    return 0


def _cmd_run(cfg: RunConfig, args) -> int:
    outdir = _outdir(args)
    result = run(cfg)
    path = outdir / "run.csv"
    write_csv(result, path)
    metrics = result.metrics
    for key in sorted(metrics):
        print(f"{key} = {metrics[key]:.6g}")
    print(f"wrote {path}")
    _write_manifest(outdir, cfg, args, [path.name], metrics=metrics)
    return 0


if __name__ == "__main__":
    sys.exit(main())

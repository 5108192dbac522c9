"""Command line: ``oamqkd {crosstalk,qkd,stability,optimize-mu}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import scenarios
from .config import PRESETS, ConfigError, ScenarioConfig, load, load_preset
from .security import MuGrid


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", help="scenario JSON document")
    src.add_argument("--preset", choices=PRESETS, help="shipped scenario")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory (default: out)")

    ap = argparse.ArgumentParser(prog="oamqkd", description="OAM-multiplexed time-bin QKD simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("crosstalk", parents=[common], help="heater calibration and mode crosstalk matrices")

    q = sub.add_parser("qkd", parents=[common], help="multiplexed QKD run with finite-key analysis")
    q.add_argument("--modes", type=int, nargs="+", help="modes to analyse (default: all configured)")
    q.add_argument("--pulses", type=float, help="Monte-Carlo pulses per mode (sub-sampling)")

    s = sub.add_parser("stability", parents=[common], help="windowed QBER time series")
    s.add_argument("--duration", type=float, help="run length in s")
    s.add_argument("--window", type=float, help="window length in s")
    s.add_argument("--pulses-per-window", type=float)
    s.add_argument("--no-pll", action="store_true", help="disable the phase-lock feedback")
    s.add_argument("--no-drift", action="store_true", help="freeze phase and heater drift")

    o = sub.add_parser("optimize-mu", parents=[common], help="grid search of (mu1, mu2)")
    o.add_argument("--mode", type=int, help="mode to optimise (default: first configured)")
    o.add_argument("--step", type=float, default=0.01, help="grid step (default: 0.01)")
    return ap


def resolve_config(args) -> ScenarioConfig:
    if args.config:
        cfg = load(args.config)
    else:
        cfg = load_preset(args.preset or "2mode")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def run(args) -> dict:
    cfg = resolve_config(args)
    if args.command == "crosstalk":
        return scenarios.run_crosstalk(cfg, args.out)
    if args.command == "qkd":
        if args.pulses is not None:
            cfg = replace(cfg, run=replace(cfg.run, simulated_pulses=args.pulses))
        return scenarios.run_qkd(cfg, args.out, args.modes)
    if args.command == "stability":
        st = cfg.stability
        st = replace(
            st,
            duration_s=args.duration if args.duration is not None else st.duration_s,
            window_s=args.window if args.window is not None else st.window_s,
            pulses_per_window=args.pulses_per_window or st.pulses_per_window,
            pll_enabled=st.pll_enabled and not args.no_pll,
            drift_enabled=st.drift_enabled and not args.no_drift,
        )
        return scenarios.run_stability(replace(cfg, stability=st), args.out)
    if args.command == "optimize-mu":
        return scenarios.run_optimize_mu(cfg, args.out, args.mode, MuGrid(step=args.step))
    raise ValueError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = run(args)
    except ConfigError as exc:
        error = {"error": "config", "path": exc.path, "message": exc.message}
    except (ValueError, OSError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
    else:
        summary = {k: v for k, v in report.items() if not isinstance(v, (list, dict))}
        print(json.dumps(summary, sort_keys=True))
        return 0
    print(json.dumps(error, sort_keys=True), file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())

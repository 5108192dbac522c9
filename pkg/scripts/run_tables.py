"""Simulate both presets and print QBERs next to the reference tables.

    python scripts/run_tables.py [--pulses N] [--out DIR]

Without --pulses the full 300 s block is simulated (a few minutes per preset).
"""
import argparse
from dataclasses import replace

from oamqkd import load_preset, scenarios
from oamqkd.calibration import QBER_KEYS, reference_tables


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pulses", type=float, help="Monte-Carlo pulses per mode")
    ap.add_argument("--out", default="out/tables")
    args = ap.parse_args()
    for name, rows in reference_tables().items():
        cfg = load_preset(name)
        if args.pulses:
            cfg = replace(cfg, run=replace(cfg.run, simulated_pulses=args.pulses))
        run = scenarios.run_qkd(cfg, f"{args.out}/{name}")
        by_mode = {m["mode"]: m for m in run["modes"]}
        print(f"{name}: {run['simulated_pulses']:.3e} pulses per mode")
        print(f"  {'mode':>5} " + " ".join(f"{k:>17}" for k in QBER_KEYS) + f" {'SKR kbps':>9}")
        for ref in rows:
            got = by_mode[ref.ell]
            cells = " ".join(f"{100 * got[k]:7.2f} ({t:5.2f})  " for k, t in zip(QBER_KEYS, ref.qber_percent))
            print(f"  {ref.ell:>5} {cells} {got['skr_bps'] / 1e3:9.1f}")


if __name__ == "__main__":
    main()

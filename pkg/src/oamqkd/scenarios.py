"""Scenario runners behind the command line: crosstalk characterisation, QKD
runs, long-term stability and mean-photon-number optimisation.

Each runner takes a ``ScenarioConfig`` and an output directory and returns the
report dictionary it also writes to ``report.json``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import (
    FiberSpec,
    ModeTransferMatrix,
    OAMLink,
    calibrate_coupling_strength,
    crosstalk_power,
    crosstalk_time_of_flight,
    impulse_response,
    project,
    random_hermitian,
)
from .config import ConfigError, ModeConfig, ScenarioConfig, prbs_seed, seed_sequence
from .detection import (
    Leak,
    LeakSource,
    PhaseTrace,
    TallyBlock,
    detect_block,
    drift_sigma_for_rms,
    pll_phase_process,
    sift,
)
from .emitter import HeaterState, calibrate_heaters, chip_crosstalk_objective, emit_field
from .protocol import PRBSSource, SymbolSequence, generate_symbols, random_symbols
from .security import KeyRateReport, MuGrid, RateModel, analyze_mode, optimize_mu

# seed-sequence purposes, see config.seed_sequence
DETECTION, SIFTING, PHASE, HEATER = 1, 2, 3, 4
RNG_PATTERN_PULSES = 2**20


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _out(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- link


def calibrated_heaters(cfg: ScenarioConfig) -> tuple[HeaterState, HeaterState]:
    """(misaligned, calibrated) heater states for the configured modes."""
    return _calibrated_heaters(cfg.chip, cfg.heaters, tuple(cfg.ells))


@lru_cache(maxsize=16)
def _calibrated_heaters(chip, heaters, ports):
    start = HeaterState.random(chip.num_outputs, heaters.sigma_rad, heaters.seed)
    done = calibrate_heaters(
        ports, start, heaters.calibration_rounds, chip_crosstalk_objective(ports, chip), heaters.grid_points
    )
    return start, done


def build_link(cfg: ScenarioConfig, strength: float | None = None) -> OAMLink:
    f = cfg.fiber
    if strength is None:
        strength = f.coupling_strength if f.coupling_strength is not None else calibrated_coupling_strength(cfg)
    h = random_hermitian(len(f.mode_set), f.coupling_seed)
    coupling = ModeTransferMatrix.from_hermitian(f.mode_set, h, strength)
    fiber = FiberSpec(f.mode_set, f.length_m, f.loss_db, f.group_delay_ns, coupling)
    return OAMLink(cfg.chip, calibrated_heaters(cfg)[1], fiber)


def calibrated_coupling_strength(cfg: ScenarioConfig) -> float:
    f = cfg.fiber
    return calibrate_coupling_strength(
        lambda s: build_link(cfg, s), cfg.ells, f.coupling_target_db, f.coupling_statistic
    )


def run_crosstalk(cfg: ScenarioConfig, out_dir) -> dict:
    out = _out(out_dir)
    misaligned, heaters = calibrated_heaters(cfg)
    objective = chip_crosstalk_objective(cfg.ells, cfg.chip)
    link = build_link(cfg)
    power = crosstalk_power(link, cfg.ells)
    ir = impulse_response(link, cfg.ells, cfg.crosstalk.pulse_width_ns)
    tof = crosstalk_time_of_flight(ir, link.fiber.group_delay_ns, cfg.crosstalk.tof_bin_ns, cfg.ells)
    (out / "crosstalk.csv").write_text(power.to_csv())
    (out / "crosstalk_tof.csv").write_text(tof.to_csv())
    heater_doc = {
        "misaligned_rad": misaligned.to_list(),
        "calibrated_rad": heaters.to_list(),
        "chip_crosstalk_before_db": objective(misaligned),
        "chip_crosstalk_after_db": objective(heaters),
    }
    write_json(out / "heaters.json", heater_doc)
    report = {
        "scenario": "crosstalk",
        "config": cfg.name,
        "modes": cfg.ells,
        "coupling_strength": _strength(cfg),
        "power_method": power.to_dict(),
        "time_of_flight": tof.to_dict(),
        "worst_db": power.worst,
        "best_db": power.best,
        "max_method_difference_db": float(np.nanmax(np.abs(power.values - tof.values))),
        "heaters": heater_doc,
    }
    write_json(out / "report.json", report)
    return report


def _strength(cfg: ScenarioConfig) -> float:
    s = cfg.fiber.coupling_strength
    return float(s) if s is not None else calibrated_coupling_strength(cfg)


# ---------------------------------------------------------------- QKD


def mode_symbols(cfg: ScenarioConfig, index: int, mode: ModeConfig, n_pulses: int, mu1=None, mu2=None) -> SymbolSequence:
    proto = cfg.protocol_params(mode, mu1, mu2)
    if cfg.protocol.entropy == "prbs":
        return generate_symbols(proto, n_pulses, PRBSSource(prbs_seed(cfg.seed, index)))
    pattern = random_symbols(proto, RNG_PATTERN_PULSES, seed_sequence(cfg.seed, 5, index))
    return SymbolSequence(pattern.states, pattern.intensities, proto.mu1, proto.mu2, n_pulses)


def _phase_trace(cfg: ScenarioConfig, n_pulses: int, start: int, seed) -> PhaseTrace:
    rms = cfg.receiver.residual_phase_rms_rad
    if rms == 0:
        return PhaseTrace.constant(0.0)
    pll = cfg.pll
    rate = cfg.protocol.qubit_rate_hz
    sigma = drift_sigma_for_rms(rms, pll.gain_per_s, pll.dt_s)
    per_step = max(1, int(round(pll.dt_s * rate)))
    steps = -(-n_pulses // per_step)
    # start in the stationary state of the locked loop
    rng = np.random.default_rng(seed)
    phi0 = float(rng.normal(0.0, rms))
    _, phases = pll_phase_process(sigma, pll.gain_per_s, pll.dt_s, steps * pll.dt_s, rng, phi0)
    return PhaseTrace(phases, per_step, start)


def _blocks(total: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(size, total - s)) for s in range(0, total, size)]


def simulate_mode(
    cfg: ScenarioConfig,
    index: int,
    n_pulses: int,
    symbols: Sequence[SymbolSequence],
    *,
    receiver=None,
    leak_fraction: float | None = None,
) -> TallyBlock:
    """Monte-Carlo tally of one mode while every configured mode is excited."""
    mode = cfg.modes[index]
    proto = cfg.protocol_params(mode, symbols[index].mu1, symbols[index].mu2)
    frac = cfg.leak_fraction(mode) if leak_fraction is None else leak_fraction
    leaks = [Leak(s, frac) for j, s in enumerate(symbols) if j != index and frac > 0]
    receiver = receiver or cfg.receiver_for(mode)
    block = max(1, int(cfg.run.block_pulses))
    tally = TallyBlock.empty()
    for b, (start, count) in enumerate(_blocks(n_pulses, block)):
        phase = _phase_trace(cfg, count, start, seed_sequence(cfg.seed, PHASE, index, b))
        clicks = detect_block(
            symbols[index], proto, cfg.link_loss_db(mode), receiver, cfg.detector,
            seed_sequence(cfg.seed, DETECTION, index, b),
            leaks=leaks, phase=phase, start_pulse=start, n_pulses=count,
        )
        tally = tally + sift(
            symbols[index], clicks, proto, receiver.gate_ps,
            start_pulse=start, n_pulses=count, seed=seed_sequence(cfg.seed, SIFTING, index, b),
        )
    return tally


def scale_tally(tally: TallyBlock, factor: float, duration_s: float) -> TallyBlock:
    """Extrapolate a sub-sampled tally to the full block (rounded counts)."""
    if factor == 1.0:
        return TallyBlock(tally.n, tally.m, duration_s)
    n = np.rint(tally.n * factor).astype(np.int64)
    m = np.minimum(np.rint(tally.m * factor).astype(np.int64), n)
    return TallyBlock(n, m, duration_s)


def run_qkd(cfg: ScenarioConfig, out_dir, modes: Sequence[int] | None = None) -> dict:
    """Excite every configured mode, demultiplex and analyse the requested ones."""
    out = _out(out_dir)
    wanted = list(modes) if modes else cfg.ells
    for ell in wanted:
        cfg.mode(ell)
    rate = cfg.protocol.qubit_rate_hz
    full = int(round(cfg.run.duration_s * rate))
    n_sim = full if cfg.run.simulated_pulses is None else min(full, int(cfg.run.simulated_pulses))
    symbols = [mode_symbols(cfg, i, m, full) for i, m in enumerate(cfg.modes)]

    results, tallies = [], {}
    for i, mode in enumerate(cfg.modes):
        if mode.ell not in wanted:
            continue
        raw = simulate_mode(cfg, i, n_sim, symbols)
        tallies[mode.ell] = raw.to_dict()
        block = scale_tally(raw, full / n_sim, cfg.run.duration_s)
        results.append(analyze_mode(mode.ell, block, cfg.protocol_params(mode), cfg.security))
    report = KeyRateReport(tuple(results))

    (out / "qber_table.csv").write_text(report.qber_table_csv())
    (out / "skr.csv").write_text(report.skr_csv())
    doc = {
        "scenario": "qkd",
        "config": cfg.name,
        "seed": cfg.seed,
        "block_s": cfg.run.duration_s,
        "pulses_per_block": full,
        "simulated_pulses": n_sim,
        "simulated_tallies": {str(k): v for k, v in tallies.items()},
        **report.to_dict(),
    }
    write_json(out / "report.json", doc)
    return doc


# ---------------------------------------------------------------- stability


def chip_leak(cfg: ScenarioConfig, heaters: HeaterState, source: int, target: int) -> float:
    """Power launched into harmonic ``target`` when port ``source`` is driven,
    relative to what port ``target`` launches into its own harmonic."""
    own = abs(project(emit_field(target, cfg.chip, heaters))[target]) ** 2
    stray = abs(project(emit_field(source, cfg.chip, heaters))[target]) ** 2
    return float(stray / own)


def heater_drift(cfg: ScenarioConfig, times_s: np.ndarray) -> list[HeaterState]:
    """Calibrated heaters plus an offset that relaxes exponentially while a
    slow random walk accumulates."""
    st = cfg.stability
    k = cfg.chip.num_outputs
    base = calibrated_heaters(cfg)[1].phase_trim
    rng = np.random.default_rng(seed_sequence(cfg.seed, HEATER, 0, 0))
    offset = rng.normal(0.0, st.heater_initial_sigma_rad, k)
    dt = np.diff(times_s, prepend=0.0)
    walk = np.cumsum(rng.normal(0.0, 1.0, (times_s.size, k)) * np.sqrt(dt)[:, None], axis=0)
    walk *= st.heater_noise_rad_per_sqrt_s
    return [
        HeaterState(base + offset * math.exp(-t / st.heater_relax_s) + w) for t, w in zip(times_s, walk)
    ]


def run_stability(cfg: ScenarioConfig, out_dir) -> dict:
    st = cfg.stability
    ratio = st.duration_s / st.window_s
    if st.window_s <= 0 or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError(
            f"window {st.window_s} s does not divide duration {st.duration_s} s", "stability.window_s"
        )
    out = _out(out_dir)
    n_windows = int(round(ratio))
    index = cfg.ells.index(st.mode)
    mode = cfg.modes[index]
    receiver = cfg.receiver_for(mode)
    receiver = replace(
        receiver,
        z_error=st.z_error if st.z_error is not None else receiver.z_error,
        visibility=st.visibility if st.visibility is not None else receiver.visibility,
        residual_phase_rms_rad=0.0,
    )
    n_win = int(st.pulses_per_window)
    symbols = [
        mode_symbols(cfg, i, m, n_win, *((st.mu1, st.mu2) if i == index else (None, None)))
        for i, m in enumerate(cfg.modes)
    ]
    proto = cfg.protocol_params(mode, st.mu1, st.mu2)
    base_leak = cfg.leak_fraction(mode)

    # interferometer phase over the whole run
    steps_per_window = max(1, int(round(st.window_s / st.pll_dt_s)))
    gain = st.pll_gain_per_s if st.pll_enabled else 0.0
    if st.drift_enabled:
        _, phases = pll_phase_process(
            st.drift_sigma_rad_per_sqrt_s, gain, st.pll_dt_s, n_windows * steps_per_window * st.pll_dt_s,
            seed_sequence(cfg.seed, PHASE, index, 0),
        )
    else:
        phases = np.zeros(n_windows * steps_per_window)
    mids = (np.arange(n_windows) + 0.5) * st.window_s
    heaters = heater_drift(cfg, mids) if st.drift_enabled else [calibrated_heaters(cfg)[1]] * n_windows
    per_step = max(1, -(-n_win // steps_per_window))

    rows = []
    for w in range(n_windows):
        ph = phases[w * steps_per_window : (w + 1) * steps_per_window]
        leaks = []
        chip = {}
        for j, other in enumerate(cfg.modes):
            if j == index:
                continue
            chip[other.ell] = chip_leak(cfg, heaters[w], other.ell, mode.ell)
            frac = base_leak + chip[other.ell]
            if frac > 0:
                leaks.append(Leak(symbols[j], frac))
        clicks = detect_block(
            symbols[index], proto, cfg.link_loss_db(mode), receiver, cfg.detector,
            seed_sequence(cfg.seed, DETECTION, index, w), leaks=leaks, phase=PhaseTrace(ph, per_step),
        )
        t = sift(symbols[index], clicks, proto, receiver.gate_ps, seed=seed_sequence(cfg.seed, SIFTING, index, w))
        rows.append(
            {
                "window": w,
                "t_start_s": w * st.window_s,
                "t_end_s": (w + 1) * st.window_s,
                "n_Z": int(t.n[0].sum()),
                "n_X": int(t.n[1].sum()),
                "Q_Z": t.qber("Z"),
                "Q_X": t.qber("X"),
                "phase_rms_rad": float(np.sqrt(np.mean(ph**2))),
                "chip_leak_db": 10 * math.log10(max(sum(chip.values()), 1e-300)) if chip else None,
            }
        )

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    (out / "stability.csv").write_text(buf.getvalue())
    doc = {
        "scenario": "stability",
        "config": cfg.name,
        "mode": st.mode,
        "mu1": st.mu1,
        "mu2": st.mu2,
        "pll_enabled": st.pll_enabled,
        "drift_enabled": st.drift_enabled,
        "windows": n_windows,
        "pulses_per_window": n_win,
        "max_Q_Z": max(r["Q_Z"] for r in rows),
        "max_Q_X": max(r["Q_X"] for r in rows),
        "series": rows,
    }
    write_json(out / "report.json", doc)
    return doc


# ---------------------------------------------------------------- optimiser


def rate_model(cfg: ScenarioConfig, ell: int, **overrides) -> RateModel:
    mode = cfg.mode(ell)
    frac = cfg.leak_fraction(mode)
    leaks = tuple(LeakSource(cfg.protocol_params(o), frac) for o in cfg.modes if o.ell != ell and frac > 0)
    kwargs = dict(
        link_loss_db=cfg.link_loss_db(mode),
        receiver=cfg.receiver_for(mode),
        detector=cfg.detector,
        base=cfg.protocol_params(mode),
        leaks=leaks,
        block_s=cfg.run.duration_s,
        security=cfg.security,
    )
    kwargs.update(overrides)
    return RateModel(**kwargs)


def run_optimize_mu(cfg: ScenarioConfig, out_dir, ell: int | None = None, grid: MuGrid = MuGrid()) -> dict:
    out = _out(out_dir)
    ell = cfg.ells[0] if ell is None else ell
    best = optimize_mu(rate_model(cfg, ell), grid)
    (out / "mu_surface.csv").write_text(best.surface_csv())
    doc = {
        "scenario": "optimize-mu",
        "config": cfg.name,
        "mode": ell,
        "mu1": best.mu1,
        "mu2": best.mu2,
        "skr_bps": best.skr,
        "grid_step": grid.step,
    }
    write_json(out / "optimum.json", {k: doc[k] for k in ("mode", "mu1", "mu2", "skr_bps")})
    write_json(out / "report.json", doc)
    return doc

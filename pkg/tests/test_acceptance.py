"""Acceptance suite: one test per criterion, named ``test_criterion_<n>_*``.

Run ``python tests/test_acceptance.py`` for a PASS/FAIL line per criterion.
"""
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import finite_key_oracle as oracle
from oamqkd import cli, scenarios
from oamqkd.calibration import QBER_KEYS, reference_tables
from oamqkd.channel import project
from oamqkd.config import ModeConfig, load_preset
from oamqkd.detection import DET_XB, DET_XD, DET_Z, DetectorSpec, ReceiverSpec, detect_block
from oamqkd.emitter import ChipGeometry, emit_field, winding_steps
from oamqkd.protocol import PRBSSource, ProtocolParams, generate_symbols, prbs_stream
from oamqkd.security import RateModel, SecurityParams, binary_entropy, decoy_bounds, key_length

from test_security import _tagged_trials

PRBS_PERIOD = 4095


@pytest.fixture(scope="module")
def preset_runs(tmp_path_factory):
    """Full 300 s block Monte Carlo of both presets (shared by criteria 3 and 5)."""
    out = tmp_path_factory.mktemp("presets")
    return {name: scenarios.run_qkd(load_preset(name), out / name) for name in ("2mode", "3mode")}


def test_criterion_1_star_coupler_law():
    start = time.perf_counter()
    geo = ChipGeometry()
    assert geo.num_outputs == 26
    for ell in range(-7, 8):
        field = emit_field(ell, geo)
        steps = winding_steps(field)
        assert np.allclose(steps, np.angle(np.exp(2j * np.pi * ell / 26)), atol=1e-12)
        p = np.abs(project(field).amplitudes) ** 2
        own = p[list(project(field).modes).index(ell)]
        assert p.sum() - own < 1e-12 * own
    assert time.perf_counter() - start < 1.0


def test_criterion_2_crosstalk_presets(tmp_path):
    start = time.perf_counter()
    two = scenarios.run_crosstalk(load_preset("2mode"), tmp_path / "2")
    three = scenarios.run_crosstalk(load_preset("3mode"), tmp_path / "3")
    assert abs(two["worst_db"] + 12.0) <= 1.0
    assert abs(three["best_db"] + 18.0) <= 1.0
    assert two["max_method_difference_db"] <= 0.5
    assert three["max_method_difference_db"] <= 0.5
    assert time.perf_counter() - start < 10.0


@pytest.mark.slow
def test_criterion_3_table_reproduction(preset_runs):
    worst = 0.0
    for name, rows in reference_tables().items():
        run = preset_runs[name]
        assert run["simulated_pulses"] >= 10**7
        by_mode = {m["mode"]: m for m in run["modes"]}
        for ref in rows:
            got = by_mode[ref.ell]
            assert (got["mu1"], got["mu2"]) == (ref.mu1, ref.mu2)
            for key, target in zip(QBER_KEYS, ref.qber_percent):
                worst = max(worst, abs(100.0 * got[key] - target))
    assert worst <= 0.5, f"largest QBER deviation {worst:.3f} pp"


def test_criterion_4_finite_key_oracle():
    rng = np.random.default_rng(4)
    worst, positives = 0.0, 0
    for _ in range(1000):
        nz = int(rng.integers(10**4, 10**10))
        nx = int(rng.integers(10**2, max(nz // 5, 200)))
        f1 = rng.uniform(0.4, 0.9)
        n = np.array([[nz * f1, nz * (1 - f1)], [nx * f1, nx * (1 - f1)]]).astype(np.int64) + 1
        m = np.floor(n * rng.uniform(0.0, 0.1, (2, 2))).astype(np.int64)
        mu1 = rng.uniform(0.15, 0.7)
        mu2 = rng.uniform(0.03, mu1 - 0.05)
        p1 = rng.uniform(0.5, 0.9)
        params = SecurityParams()
        ours = key_length((n, m), decoy_bounds((n, m), mu1, mu2, params, p1), params)
        ref = float(oracle.key_length(n, m, mu1, mu2, p1, params.eps_sec, params.eps_corr, params.f_ec)["length"])
        if ref == 0.0:
            assert ours == 0.0
        else:
            positives += 1
            worst = max(worst, abs(ours - ref) / ref)
    assert positives > 100 and worst <= 1e-9

    trials = 10**4
    violations = 0
    for n, m, s0, s1, ph in _tagged_trials(trials, 2021):
        b = decoy_bounds((n, m), 0.26, 0.13)
        violations += b.s0_lower > s0 or b.s1_lower > s1 or (s1 > 0 and ph / s1 > b.phi_upper)
    assert violations <= 10 * SecurityParams().eps_sec * trials


@pytest.mark.slow
def test_criterion_5_sdm_scaling(preset_runs, tmp_path):
    # identical, well-aligned channels; each mode draws its own seed streams
    base = load_preset("3mode")
    template = dict(mu1=0.26, mu2=0.13, coupling_loss_db=10.0, visibility=0.98, z_error=0.005, leak_db=None)
    cfg = replace(base, modes=tuple(ModeConfig(ell, **template) for ell in (-7, 6, -5)))
    run = scenarios.run_qkd(cfg, tmp_path)
    single = scenarios.rate_model(cfg, -7).skr(0.26, 0.13)
    skr = [m["skr_bps"] for m in run["modes"]]
    for n in (2, 3):
        assert sum(skr[:n]) == pytest.approx(n * single, rel=0.01)

    two = [m["skr_bps"] for m in preset_runs["2mode"]["modes"]]
    three = [m["skr_bps"] for m in preset_runs["3mode"]["modes"]]
    assert max(three) < min(two)


@pytest.mark.slow
def test_criterion_6_stability(tmp_path):
    cfg = load_preset("2mode")
    assert cfg.stability.mu1 == 0.24 and cfg.stability.duration_s == 4500.0 and cfg.stability.window_s == 75.0
    locked = scenarios.run_stability(cfg, tmp_path / "on")
    assert locked["windows"] == 60
    assert all(r["Q_Z"] < 0.02 and r["Q_X"] < 0.06 for r in locked["series"])
    free = scenarios.run_stability(replace(cfg, stability=replace(cfg.stability, pll_enabled=False)), tmp_path / "off")
    assert any(r["Q_X"] >= 0.06 for r in free["series"])


def _tree(path: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_criterion_7_property_suite(tmp_path, capsys):
    start = time.perf_counter()
    for seed in (1, 77, 4095):
        bits = prbs_stream(seed, 2 * PRBS_PERIOD)
        assert np.array_equal(bits[:PRBS_PERIOD], bits[PRBS_PERIOD:])
        assert int(bits[:PRBS_PERIOD].sum()) == 2048
        s = 1 - 2 * bits[:PRBS_PERIOD].astype(int)
        for shift in (1, 100, 2047):
            assert np.dot(s, np.roll(s, shift)) == -1

    det = DetectorSpec(dead_time_ps=500.0, dark_cps=1e6)
    seq = generate_symbols(ProtocolParams(mu1=2.0, mu2=1.0), 50_000, PRBSSource(5))
    log = detect_block(seq, ProtocolParams(mu1=2.0, mu2=1.0), 1.0, ReceiverSpec(), det, 3)
    for d in (DET_Z, DET_XB, DET_XD):
        assert log.min_spacing(d) >= det.dead_time_ps

    assert binary_entropy(0.0) == 0.0 and binary_entropy(0.5) == 1.0

    def model(z=0.01, dark=50.0):
        return RateModel(20.15, ReceiverSpec(gate_ps=1.0, z_error=z), DetectorSpec(dark_cps=dark)).skr(0.26, 0.13)

    rates = [model(z=z) for z in (0.0, 0.01, 0.02, 0.04)]
    assert all(a >= b for a, b in zip(rates, rates[1:])) and rates[0] > rates[-1]
    rates = [model(dark=d) for d in (0.0, 1e3, 1e4, 1e5)]
    assert all(a >= b for a, b in zip(rates, rates[1:])) and rates[0] > rates[-1]

    for argv in (["crosstalk", "--preset", "2mode"], ["qkd", "--preset", "2mode", "--pulses", "1e6"]):
        a, b = tmp_path / f"{argv[0]}-a", tmp_path / f"{argv[0]}-b"
        assert cli.main(argv + ["--out", str(a)]) == 0
        assert cli.main(argv + ["--out", str(b)]) == 0
        assert _tree(a) == _tree(b)
    capsys.readouterr()
    assert time.perf_counter() - start < 60.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

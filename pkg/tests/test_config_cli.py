import csv
import io
import json
from dataclasses import replace

import pytest

from oamqkd import cli, scenarios
from oamqkd.config import ConfigError, ModeConfig, ScenarioConfig, from_dict, load, load_preset
from oamqkd.security import parse_qber_table


def small(cfg, pulses=2e6):
    return replace(cfg, run=replace(cfg.run, simulated_pulses=pulses))


def short_stability(cfg, **kw):
    st = dict(duration_s=300.0, window_s=75.0, pulses_per_window=2e6)
    st.update(kw)
    return replace(cfg, stability=replace(cfg.stability, **st))


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"modes": [{"ell": 3, "mu1": 0.2, "mu2": 0.1}], "fiber": {"mode_set": [-7, 7]}}, "modes[0].ell"),
        ({"modes": [{"ell": -7, "mu1": "x", "mu2": 0.1}]}, "modes[0].mu1"),
        ({"modes": [{"ell": -7, "mu2": 0.1}]}, "modes[0]"),
        ({"fiber": {"coupling_statistic": "median"}}, "fiber.coupling_statistic"),
        ({"receiver": {"unknown": 1}}, "receiver"),
        ({"seed": -1}, "seed"),
        ({"modes": [{"ell": -7, "mu1": 0.2, "mu2": 0.1}, {"ell": -7, "mu1": 0.2, "mu2": 0.1}]}, "modes"),
        ({"stability": {"mode": 5}}, "stability.mode"),
        ({"run": {"duration_s": 0}}, "run.duration_s"),
    ],
)
def test_schema_errors_carry_paths(doc, path):
    with pytest.raises(ConfigError) as err:
        from_dict(doc)
    assert err.value.path == path


def test_mode_outside_fiber_rejected_directly():
    with pytest.raises(ConfigError):
        ScenarioConfig(modes=(ModeConfig(8, 0.2, 0.1),))


@pytest.mark.parametrize("name, ells", [("2mode", [-7, -5]), ("3mode", [-7, 6, -5])])
def test_presets_load_and_round_trip(name, ells, tmp_path):
    cfg = load_preset(name)
    assert cfg.ells == ells
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert load(path) == cfg


def test_unknown_preset_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        load_preset("4mode")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load(bad)


def run_cli(capsys, *argv):
    rc = cli.main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_cli_reports_missing_mode(capsys, tmp_path):
    rc, out, err = run_cli(capsys, "qkd", "--preset", "2mode", "--modes", "3", "--out", str(tmp_path))
    assert rc == 2 and out == ""
    assert json.loads(err) == {"error": "config", "message": "mode 3 not configured", "path": "modes"}


def test_cli_reports_bad_window(capsys, tmp_path):
    rc, _, err = run_cli(capsys, "stability", "--preset", "2mode", "--duration", "100", "--window", "30",
                         "--out", str(tmp_path))
    assert rc == 2
    assert json.loads(err)["path"] == "stability.window_s"


def test_cli_rejects_bad_seed():
    with pytest.raises(SystemExit) as exc:
        cli.main(["crosstalk", "--seed", str(2**64)])
    assert exc.value.code == 2


def test_cli_seed_override(tmp_path):
    args = cli.build_parser().parse_args(["qkd", "--preset", "3mode", "--seed", "0x10"])
    assert cli.resolve_config(args).seed == 16


def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.mark.parametrize(
    "argv",
    [
        ["crosstalk", "--preset", "3mode"],
        ["qkd", "--preset", "2mode", "--pulses", "2e6"],
        ["stability", "--preset", "2mode", "--duration", "150", "--window", "75", "--pulses-per-window", "1e6"],
        ["optimize-mu", "--preset", "2mode", "--step", "0.05"],
    ],
)
def test_cli_outputs_are_byte_identical(argv, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(argv + ["--out", str(a)]) == 0
    assert cli.main(argv + ["--out", str(b)]) == 0
    assert _tree(a) == _tree(b)
    assert _tree(a)
    capsys.readouterr()


def test_seed_changes_qkd_output(tmp_path):
    cfg = small(load_preset("2mode"))
    a = scenarios.run_qkd(cfg, tmp_path / "a")
    b = scenarios.run_qkd(replace(cfg, seed=cfg.seed + 1), tmp_path / "b")
    assert a["simulated_tallies"] != b["simulated_tallies"]


def test_qkd_outputs_parse(tmp_path):
    cfg = small(load_preset("3mode"))
    doc = scenarios.run_qkd(cfg, tmp_path, [6])
    table = parse_qber_table((tmp_path / "qber_table.csv").read_text())
    assert list(table) == [6]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["simulated_pulses"] == 2_000_000
    assert report["pulses_per_block"] == round(300 * 5.95e8)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "skr.csv").read_text())))
    assert len(rows) >= 1
    assert json.dumps(doc, sort_keys=True) == json.dumps(report, sort_keys=True)


def test_crosstalk_csv_matches_report(tmp_path):
    doc = scenarios.run_crosstalk(load_preset("2mode"), tmp_path)
    rows = list(csv.reader(io.StringIO((tmp_path / "crosstalk.csv").read_text())))
    values = [float(v) for i, r in enumerate(rows[1:]) for j, v in enumerate(r[1:]) if i != j]
    assert max(values) == pytest.approx(doc["worst_db"], abs=0.005)
    assert (tmp_path / "crosstalk_tof.csv").exists() and (tmp_path / "heaters.json").exists()
    assert doc["max_method_difference_db"] < 0.1


def test_stability_window_count(tmp_path):
    cfg = short_stability(load_preset("2mode"), duration_s=4500.0, window_s=75.0, pulses_per_window=2e4)
    doc = scenarios.run_stability(cfg, tmp_path)
    assert doc["windows"] == 60 and len(doc["series"]) == 60
    assert doc["series"][-1]["t_end_s"] == 4500.0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "stability.csv").read_text())))
    assert len(rows) == 60


def test_stability_window_must_divide(tmp_path):
    with pytest.raises(ConfigError):
        scenarios.run_stability(short_stability(load_preset("2mode"), window_s=70.0), tmp_path)


def test_stability_without_drift_is_flat(tmp_path):
    cfg = short_stability(load_preset("2mode"), drift_enabled=False)
    doc = scenarios.run_stability(cfg, tmp_path)
    assert {r["phase_rms_rad"] for r in doc["series"]} == {0.0}
    assert len({r["chip_leak_db"] for r in doc["series"]}) == 1


def test_noiseless_single_mode_has_no_z_errors(tmp_path):
    cfg = ScenarioConfig(
        modes=(ModeConfig(-7, 0.5, 0.2, coupling_loss_db=0.0, visibility=1.0),),
        receiver=replace(ScenarioConfig().receiver, background_Z_cps=0.0, background_X_cps=0.0),
        detector=replace(ScenarioConfig().detector, dark_cps=0.0),
        run=replace(ScenarioConfig().run, simulated_pulses=1e6),
    )
    doc = scenarios.run_qkd(cfg, tmp_path)
    t = doc["simulated_tallies"]["-7"]
    assert sum(t["n"]["Z"].values()) > 1000
    assert sum(t["m"]["Z"].values()) == 0

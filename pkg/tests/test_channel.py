import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oamqkd.channel import (
    CrosstalkMatrix,
    FiberSpec,
    ModeError,
    ModeTransferMatrix,
    ModeVector,
    OAMLink,
    ResolutionError,
    calibrate_coupling_strength,
    crosstalk_power,
    crosstalk_time_of_flight,
    demux_slm,
    impulse_response,
    project,
    propagate,
    random_hermitian,
)
from oamqkd.emitter import ChipGeometry, HeaterState, emit_field

GEO = ChipGeometry()
MODES = tuple(range(-7, 8))


def test_ideal_projection_has_no_leakage():
    c = project(emit_field(-7, GEO), [-7, -5, 6])
    assert abs(c[-5]) ** 2 < 1e-12 * abs(c[-7]) ** 2
    assert abs(c[6]) ** 2 < 1e-12 * abs(c[-7]) ** 2


def test_zero_charge_projects_on_zero():
    p = np.abs(project(emit_field(0, GEO)).amplitudes) ** 2
    assert p.argmax() == list(project(emit_field(0, GEO)).modes).index(0)
    assert p.sum() - p.max() < 1e-12 * p.max()


def test_projection_rejects_aliased_orders():
    with pytest.raises(ModeError):
        project(emit_field(0, GEO), [13])


def test_heater_noise_leakage_matches_variance(derived):
    rng = np.random.default_rng(11)
    fracs = []
    for _ in range(1000):
        f = emit_field(-7, GEO, HeaterState(rng.normal(0, 0.1, 26)))
        p = np.abs(project(f).amplitudes) ** 2
        c = project(f)
        fracs.append(1 - abs(c[-7]) ** 2 / p.sum())
    mean = np.mean(fracs)
    assert mean == pytest.approx(0.01, rel=0.3)
    assert mean == pytest.approx(derived["heater_leakage_sigma_0_1"], rel=0.05)


def test_pure_loss_propagation():
    fiber = FiberSpec(loss_db=1.0)
    out, delays = propagate(ModeVector.single(MODES, -7), fiber)
    assert abs(out[-7]) ** 2 == pytest.approx(10**-0.1)
    assert delays == fiber.group_delay_ns


def test_identity_lossless_propagation():
    v = ModeVector(MODES, np.linspace(0.1, 1.5, 15) * np.exp(1j * np.arange(15)))
    out, _ = propagate(v, FiberSpec(loss_db=0.0))
    assert np.array_equal(out.amplitudes, v.amplitudes)


@given(st.integers(0, 2**32 - 1), st.floats(0, 3))
def test_coupling_is_unitary(seed, strength):
    u = ModeTransferMatrix.from_hermitian(MODES, random_hermitian(15, seed), strength).matrix
    assert np.allclose(u.conj().T @ u, np.eye(15), atol=1e-10)


def test_non_passive_matrix_rejected():
    with pytest.raises(ValueError):
        ModeTransferMatrix(MODES, 2 * np.eye(15))


def test_demux_examples():
    v = ModeVector.single(MODES, -7)
    assert abs(demux_slm(v, -7, 15.0)) ** 2 == pytest.approx(10**-1.5)
    assert demux_slm(v, -5, 3.0) == 0
    mixed = ModeVector((-7, -5), np.array([0.9, 0.436]))
    assert abs(demux_slm(mixed, -5, 0.0)) ** 2 == pytest.approx(0.436**2)


def test_ideal_crosstalk_near_diagonal():
    xt = crosstalk_power(OAMLink(GEO, None, FiberSpec()), [-7, -5, 6])
    assert xt.worst < -100


def _link(strength, seed=0):
    h = random_hermitian(15, seed)
    return OAMLink(GEO, None, FiberSpec(coupling=ModeTransferMatrix.from_hermitian(MODES, h, strength)))


def test_calibrated_two_mode_crosstalk():
    s = calibrate_coupling_strength(_link, [-7, -5], -12.0, "worst")
    xt = crosstalk_power(_link(s), [-7, -5])
    assert xt.worst == pytest.approx(-12.0, abs=1e-6)
    lin = 10 ** (xt.worst / 10)
    assert lin == pytest.approx(10**-1.2, rel=1e-5)


def test_calibrated_three_mode_best_entry():
    s = calibrate_coupling_strength(lambda x: _link(x, 2), [-7, -5, 6], -18.0, "best")
    assert crosstalk_power(_link(s, 2), [-7, -5, 6]).best == pytest.approx(-18.0, abs=1e-6)


def test_tof_single_mode_column():
    ir = impulse_response(OAMLink(GEO, None, FiberSpec()), [-7])
    xt = crosstalk_time_of_flight(ir, FiberSpec().group_delay_ns, 0.1, [-7])
    assert xt.values[0, 0] == 0.0


def test_tof_constructed_response(derived):
    t = np.arange(-0.2, 0.2, 0.005)
    shape = np.exp(-0.5 * (t / 0.05) ** 2)
    shape /= shape.sum()
    ir = [(-7, ti, w) for ti, w in zip(t, shape)]
    ir += [(-7, 3.0 + ti, 10**-1.2 * w) for ti, w in zip(t, shape)]
    ir += [(-5, 3.0 + ti, w) for ti, w in zip(t, shape)]
    ir += [(-5, ti, 10**-1.2 * w) for ti, w in zip(t, shape)]
    xt = crosstalk_time_of_flight(ir, {-7: 0.0, -5: 3.0}, 0.1)
    assert xt.entry(-5, -7) == pytest.approx(derived["tof_ratio_db"], abs=1e-9)


def test_tof_resolution_error():
    with pytest.raises(ResolutionError):
        crosstalk_time_of_flight([(-7, 0.0, 1.0)], {-7: 0.0, -5: 0.15}, 0.1)


def test_power_and_tof_agree():
    link = _link(0.6)
    power = crosstalk_power(link, [-7, -5, 6])
    tof = crosstalk_time_of_flight(impulse_response(link, [-7, -5, 6]), link.fiber.group_delay_ns, 0.1, [-7, -5, 6])
    assert np.nanmax(np.abs(power.values - tof.values)) < 0.5


def test_crosstalk_csv_round_trip():
    xt = crosstalk_power(_link(0.5), [-7, -5])
    back = CrosstalkMatrix.from_csv(xt.to_csv())
    assert back.modes == xt.modes
    assert np.allclose(back.values, np.round(xt.values, 2))
    assert CrosstalkMatrix.from_csv(back.to_csv()).to_csv() == back.to_csv()


def test_fiber_rejects_duplicate_modes():
    with pytest.raises(ModeError):
        FiberSpec(mode_set=(1, 1))

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oamqkd.protocol import (
    BITS_PER_PULSE,
    PRBS_PERIOD,
    EntropyError,
    Intensity,
    PRBSSource,
    ProtocolParams,
    PulsePair,
    State,
    SymbolSequence,
    encode,
    generate_symbols,
    prbs_stream,
    random_bits,
    random_symbols,
)

seeds = st.integers(1, 4095)


@given(seeds)
def test_prbs_period(seed):
    bits = prbs_stream(seed, 2 * PRBS_PERIOD)
    assert np.array_equal(bits[:PRBS_PERIOD], bits[PRBS_PERIOD:])
    # no shorter period: the register visits all nonzero states
    for d in (1, 3, 5, 7, 9, 13, 15, 21, 35, 39, 45, 63, 91, 105, 117, 195, 273, 315, 455, 585, 819, 1365):
        assert not np.array_equal(bits[:PRBS_PERIOD], np.roll(bits[:PRBS_PERIOD], d))


@given(seed=seeds)
def test_prbs_balance(derived, seed):
    assert int(prbs_stream(seed, PRBS_PERIOD).sum()) == derived["prbs_ones"] == 2048


@given(seeds, st.integers(1, PRBS_PERIOD - 1))
def test_prbs_autocorrelation(seed, shift):
    s = 1 - 2 * prbs_stream(seed, PRBS_PERIOD).astype(int)
    assert np.dot(s, np.roll(s, shift)) / PRBS_PERIOD == pytest.approx(-1 / PRBS_PERIOD)


def test_prbs_deterministic():
    assert np.array_equal(prbs_stream(77, 5000), prbs_stream(77, 5000))


@pytest.mark.parametrize("seed", [0, 4096, -1])
def test_prbs_rejects_bad_seed(seed):
    with pytest.raises(ValueError):
        prbs_stream(seed, 10)


def test_all_z_when_p_z_is_one():
    seq = generate_symbols(ProtocolParams(p_Z=1.0), 20_000, PRBSSource(5))
    states, _ = seq.expanded()
    assert set(np.unique(states)) <= {State.Z0, State.Z1}


def test_rng_fractions_within_binomial_band():
    n = 10**6
    seq = random_symbols(ProtocolParams(), n, 3)
    f = seq.fractions()
    for key, p in (("Z", 0.9), ("mu1", 0.7)):
        assert abs(f[key] - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_prbs_pattern_is_periodic_and_stored_once():
    seq = generate_symbols(ProtocolParams(), 10**9, PRBSSource(9))
    assert seq.period == PRBS_PERIOD
    idx = np.array([3, 3 + PRBS_PERIOD, 3 + 1000 * PRBS_PERIOD])
    assert len(set(seq.state_at(idx))) == 1


def test_bit_mapping_msb_first():
    params = ProtocolParams(p_Z=0.5, p_mu1=0.5)
    # basis word 0 -> Z, value bit 1 -> Z1, intensity word all ones -> mu2
    bits = np.array([0] * 15 + [1] + [1] * 15)
    seq = generate_symbols(params, 1, bits)
    assert seq.states[0] == State.Z1 and seq.intensities[0] == Intensity.MU2


def test_entropy_shortfall():
    with pytest.raises(EntropyError):
        generate_symbols(ProtocolParams(), 10, random_bits(10 * BITS_PER_PULSE - 1, 0))


def test_table_intensities_carried():
    seq = generate_symbols(ProtocolParams(mu1=0.26, mu2=0.13), 100, PRBSSource(1))
    assert set(np.round(seq.mu_at(np.arange(100)), 12)) == {0.26, 0.13}


def test_encode_examples():
    assert encode(State.Z0, 0.26) == PulsePair(0.26, 0.0)
    assert encode(State.XP, 0.13) == PulsePair(0.065, 0.065)
    assert encode(State.Z1, 0.0) == PulsePair(0.0, 0.0)


@pytest.mark.parametrize("kwargs", [dict(mu1=0.1, mu2=0.2), dict(p_Z=0.0), dict(p_mu1=1.5), dict(bin_separation_ps=2000)])
def test_invalid_params(kwargs):
    with pytest.raises(ValueError):
        ProtocolParams(**kwargs)


@given(st.integers(1, 3000), st.integers(0, 2**32 - 1))
def test_symbol_log_round_trip(n, seed):
    seq = random_symbols(ProtocolParams(), n, seed)
    back = SymbolSequence.from_bytes(seq.to_bytes())
    assert np.array_equal(back.states, seq.states)
    assert np.array_equal(back.intensities, seq.intensities)
    assert (back.mu1, back.mu2, back.n_pulses) == (seq.mu1, seq.mu2, seq.n_pulses)


def test_symbol_csv():
    seq = generate_symbols(ProtocolParams(), 5, PRBSSource(1))
    lines = seq.to_csv().splitlines()
    assert lines[0] == "index,state,intensity" and len(lines) == 6

"""Transmitter side of the three-state time-bin protocol with one decoy.

States: ``Z0`` (photon in the early bin), ``Z1`` (late bin) and ``X+`` (equal
superposition). Each pulse also carries one of two mean photon numbers,
``mu1`` (signal) or ``mu2`` (decoy).
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from enum import IntEnum
from typing import Sequence

import numpy as np

PRBS_ORDER = 12
PRBS_PERIOD = 2**PRBS_ORDER - 1
# x^12 + x^6 + x^4 + x + 1, primitive over GF(2)
PRBS_TAPS = (12, 6, 4, 1)

# entropy bits consumed per pulse: basis word, Z value, intensity word
CHOICE_BITS = 15
BITS_PER_PULSE = 2 * CHOICE_BITS + 1


class State(IntEnum):
    Z0 = 0
    Z1 = 1
    XP = 2


class Intensity(IntEnum):
    MU1 = 0
    MU2 = 1


class EntropyError(ValueError):
    """The entropy source ran out before every pulse was assigned."""


@dataclass(frozen=True)
class ProtocolParams:
    mu1: float = 0.26
    mu2: float = 0.13
    p_mu1: float = 0.7
    p_Z: float = 0.9
    qubit_rate_hz: float = 5.95e8
    bin_separation_ps: float = 800.0

    def __post_init__(self):
        if not 0 < self.mu2 < self.mu1:
            raise ValueError(f"need 0 < mu2 < mu1, got mu1={self.mu1}, mu2={self.mu2}")
        for name in ("p_mu1", "p_Z"):
            p = getattr(self, name)
            if not 0 < p <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {p}")
        if self.qubit_rate_hz <= 0:
            raise ValueError("qubit_rate_hz must be positive")
        if not 0 < self.bin_separation_ps < self.period_ps:
            raise ValueError("time bins must fit inside one qubit period")

    @property
    def period_ps(self) -> float:
        return 1e12 / self.qubit_rate_hz

    @property
    def p_mu2(self) -> float:
        return 1.0 - self.p_mu1

    @property
    def mus(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2])


def _lfsr_period(seed: int) -> np.ndarray:
    """One full period of the Fibonacci LFSR output, starting at ``seed``."""
    state = seed
    out = np.empty(PRBS_PERIOD, dtype=np.uint8)
    for i in range(PRBS_PERIOD):
        out[i] = state & 1
        fb = 0
        for tap in PRBS_TAPS:
            fb ^= (state >> (PRBS_ORDER - tap)) & 1
        state = (state >> 1) | (fb << (PRBS_ORDER - 1))
    return out


def prbs_stream(seed: int, length: int) -> np.ndarray:
    """First ``length`` bits of the maximal-length 12-bit PRBS from ``seed``."""
    if not 0 < seed < 2**PRBS_ORDER:
        raise ValueError(f"PRBS seed must be a nonzero {PRBS_ORDER}-bit value, got {seed}")
    period = _lfsr_period(seed)
    reps = -(-length // PRBS_PERIOD)
    return np.tile(period, reps)[:length]


@dataclass(frozen=True)
class PRBSSource:
    """Periodic entropy source backed by the 12-bit PRBS."""

    seed: int = 1
    period_bits: int = PRBS_PERIOD

    def bits(self, count: int) -> np.ndarray:
        return prbs_stream(self.seed, count)


@dataclass(frozen=True)
class PulsePair:
    early: float
    late: float

    @property
    def mean_photons(self) -> float:
        return self.early + self.late


def encode(state: State | int, mu: float) -> PulsePair:
    state = State(state)
    if state is State.Z0:
        return PulsePair(mu, 0.0)
    if state is State.Z1:
        return PulsePair(0.0, mu)
    return PulsePair(mu / 2.0, mu / 2.0)


# [state] -> (early weight, late weight)
_BIN_WEIGHTS = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])


def encode_many(states: np.ndarray, mus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``encode``: early and late mean photon numbers."""
    w = _BIN_WEIGHTS[states]
    return w[:, 0] * mus, w[:, 1] * mus


@dataclass(frozen=True)
class SymbolSequence:
    """Transmitter log. ``states``/``intensities`` hold one period of the
    pattern; pulse ``i`` uses entry ``i % period``."""

    states: np.ndarray = field(repr=False)
    intensities: np.ndarray = field(repr=False)
    mu1: float
    mu2: float
    n_pulses: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.uint8)
        intens = np.asarray(self.intensities, dtype=np.uint8)
        if states.shape != intens.shape or states.ndim != 1 or states.size == 0:
            raise ValueError("states and intensities must be equal-length 1-D arrays")
        if states.max() > 2 or intens.max() > 1:
            raise ValueError("invalid state or intensity code")
        states.setflags(write=False)
        intens.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "intensities", intens)

    @property
    def period(self) -> int:
        return self.states.size

    def __len__(self) -> int:
        return self.n_pulses

    def state_at(self, idx: np.ndarray) -> np.ndarray:
        return self.states[np.asarray(idx) % self.period]

    def intensity_at(self, idx: np.ndarray) -> np.ndarray:
        return self.intensities[np.asarray(idx) % self.period]

    def mu_at(self, idx: np.ndarray) -> np.ndarray:
        return np.array([self.mu1, self.mu2])[self.intensity_at(idx)]

    @cached_property
    def bin_pattern(self) -> tuple[np.ndarray, np.ndarray]:
        """Early/late mean photon numbers over one period."""
        return encode_many(self.states, np.array([self.mu1, self.mu2])[self.intensities])

    def expanded(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.n_pulses)
        return self.state_at(idx), self.intensity_at(idx)

    def fractions(self) -> dict[str, float]:
        """Exact pattern fractions over the whole sequence."""
        states, intens = self.expanded()
        return {
            "Z": float(np.mean(states != State.XP)),
            "mu1": float(np.mean(intens == Intensity.MU1)),
        }

    # compact log: header, then 3 bits per pulse (2-bit state, 1-bit intensity)
    _MAGIC = b"OAMS"

    def to_bytes(self) -> bytes:
        states, intens = self.expanded()
        bits = np.stack([(states >> 1) & 1, states & 1, intens], axis=1).reshape(-1)
        header = self._MAGIC + struct.pack("<Qdd", self.n_pulses, self.mu1, self.mu2)
        return header + np.packbits(bits.astype(np.uint8)).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SymbolSequence":
        if data[:4] != cls._MAGIC:
            raise ValueError("not a symbol log")
        n, mu1, mu2 = struct.unpack("<Qdd", data[4:28])
        bits = np.unpackbits(np.frombuffer(data[28:], dtype=np.uint8))[: 3 * n].reshape(n, 3)
        states = (bits[:, 0] << 1) | bits[:, 1]
        return cls(states, bits[:, 2], mu1, mu2, n)

    def to_csv(self) -> str:
        states, intens = self.expanded()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "state", "intensity"])
        names = [s.name for s in State]
        for i, (s, k) in enumerate(zip(states, intens)):
            w.writerow([i, names[s], "mu1" if k == 0 else "mu2"])
        return buf.getvalue()


def _words(bits: np.ndarray, width: int) -> np.ndarray:
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return bits.reshape(-1, width).astype(np.int64) @ weights


def _threshold(p: float) -> int:
    return int(round(p * 2**CHOICE_BITS))


def generate_symbols(params: ProtocolParams, n_pulses: int, entropy) -> SymbolSequence:
    """Assign basis, bit value and intensity to each pulse.

    Per pulse, ``BITS_PER_PULSE`` consecutive entropy bits are read MSB first:
    a 15-bit word ``u`` (Z basis iff ``u < round(p_Z * 2**15)``), one bit for
    the Z value (0 -> Z0, 1 -> Z1), and a 15-bit word ``v`` (mu1 iff
    ``v < round(p_mu1 * 2**15)``).

    ``entropy`` is either a 0/1 array or a periodic source exposing
    ``period_bits`` and ``bits(count)``. A periodic source yields a periodic
    pattern, stored once.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be positive")
    period_bits = getattr(entropy, "period_bits", None)
    if period_bits is not None:
        sym_period = period_bits // math.gcd(period_bits, BITS_PER_PULSE)
        count = min(n_pulses, sym_period)
        bits = np.asarray(entropy.bits(count * BITS_PER_PULSE), dtype=np.uint8)
    else:
        count = n_pulses
        bits = np.asarray(entropy, dtype=np.uint8).reshape(-1)
        if bits.size < count * BITS_PER_PULSE:
            raise EntropyError(
                f"{n_pulses} pulses need {n_pulses * BITS_PER_PULSE} entropy bits, got {bits.size}"
            )
        bits = bits[: count * BITS_PER_PULSE]
    chunk = bits.reshape(count, BITS_PER_PULSE)
    basis_word = _words(chunk[:, :CHOICE_BITS], CHOICE_BITS)
    value_bit = chunk[:, CHOICE_BITS]
    intensity_word = _words(chunk[:, CHOICE_BITS + 1 :], CHOICE_BITS)

    is_z = basis_word < _threshold(params.p_Z)
    states = np.where(is_z, value_bit, State.XP).astype(np.uint8)
    intens = np.where(intensity_word < _threshold(params.p_mu1), Intensity.MU1, Intensity.MU2)
    return SymbolSequence(states, intens.astype(np.uint8), params.mu1, params.mu2, n_pulses)


def random_bits(n_bits: int, seed: int | None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=n_bits, dtype=np.uint8)


def random_symbols(params: ProtocolParams, n_pulses: int, seed: int | None) -> SymbolSequence:
    """Same mapping as ``generate_symbols`` driven by a seeded software RNG."""
    return generate_symbols(params, n_pulses, random_bits(n_pulses * BITS_PER_PULSE, seed))

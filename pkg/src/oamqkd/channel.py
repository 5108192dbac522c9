"""Ring-core fiber channel: azimuthal projection, propagation, SLM demux and
the two crosstalk estimators (power sweep and time of flight)."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .emitter import ChipGeometry, EmitterField, HeaterState, multiplex

TWO_PI = 2.0 * np.pi
DB_FLOOR = 1e-300


class ResolutionError(ValueError):
    """Time-of-flight peaks of two modes cannot be separated."""


class ModeError(ValueError):
    pass


@dataclass(frozen=True)
class ModeVector:
    modes: tuple[int, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        modes = tuple(int(m) for m in self.modes)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if len(set(modes)) != len(modes):
            raise ModeError(f"mode labels must be distinct: {modes}")
        if amps.size != len(modes):
            raise ModeError("one amplitude per mode required")
        amps.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "amplitudes", amps)

    def __getitem__(self, mode: int) -> complex:
        try:
            return complex(self.amplitudes[self.modes.index(mode)])
        except ValueError:
            raise ModeError(f"mode {mode} not in {self.modes}") from None

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    @classmethod
    def single(cls, modes: Sequence[int], mode: int, amplitude: complex = 1.0) -> "ModeVector":
        modes = tuple(modes)
        amps = np.zeros(len(modes), dtype=complex)
        amps[modes.index(mode)] = amplitude
        return cls(modes, amps)


@dataclass(frozen=True)
class ModeTransferMatrix:
    modes: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        modes = tuple(int(m) for m in self.modes)
        mat = np.array(self.matrix, dtype=complex)
        if mat.shape != (len(modes), len(modes)):
            raise ModeError("transfer matrix must be square over the mode set")
        if np.linalg.norm(mat, 2) > 1.0 + 1e-12:
            raise ValueError("transfer matrix is not passive (largest singular value > 1)")
        mat.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def identity(cls, modes: Sequence[int]) -> "ModeTransferMatrix":
        return cls(tuple(modes), np.eye(len(modes)))

    @classmethod
    def from_hermitian(
        cls, modes: Sequence[int], hermitian: np.ndarray, strength: float
    ) -> "ModeTransferMatrix":
        """Unitary ``expm(1j * strength * H)``; identity at zero strength."""
        return cls(tuple(modes), expm(1j * strength * np.asarray(hermitian)))


def random_hermitian(n: int, seed: int | None = None) -> np.ndarray:
    """Random Hermitian generator with zero diagonal, scaled so the largest
    element has unit modulus.

    Diagonal terms would only add per-mode phases, which do not change power
    crosstalk, so they are dropped.
    """
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = (a + a.conj().T) / 2.0
    np.fill_diagonal(h, 0.0)
    return h / np.abs(h).max()


def default_group_delays(modes: Iterable[int], base_ns: float = 3870.0, step_ns: float = 1.5) -> dict[int, float]:
    modes = sorted(modes)
    return {m: base_ns + step_ns * i for i, m in enumerate(modes)}


@dataclass(frozen=True)
class FiberSpec:
    mode_set: tuple[int, ...] = tuple(range(-7, 8))
    length_m: float = 800.0
    loss_db: float = 1.0
    group_delay_ns: Mapping[int, float] | None = None
    coupling: ModeTransferMatrix | None = None

    def __post_init__(self):
        modes = tuple(int(m) for m in self.mode_set)
        if len(set(modes)) != len(modes):
            raise ModeError(f"fiber modes must be distinct: {modes}")
        if self.loss_db < 0:
            raise ValueError("loss_db must be non-negative")
        object.__setattr__(self, "mode_set", modes)
        delays = dict(self.group_delay_ns) if self.group_delay_ns is not None else default_group_delays(modes)
        if set(delays) != set(modes) or not all(np.isfinite(list(delays.values()))):
            raise ValueError("one finite group delay per fiber mode required")
        object.__setattr__(self, "group_delay_ns", delays)
        coupling = self.coupling or ModeTransferMatrix.identity(modes)
        if coupling.modes != modes:
            raise ModeError("coupling matrix mode order must match mode_set")
        object.__setattr__(self, "coupling", coupling)


def project(field_: EmitterField, mode_set: Sequence[int] | None = None) -> ModeVector:
    """Discrete azimuthal decomposition of the ring field.

    ``c_m = K**-0.5 * sum_k a_k exp(-2j pi m k / K)``. With ``mode_set=None``
    all K harmonics are returned, which makes the map unitary.
    """
    a = field_.amplitudes
    k_out = a.size
    if mode_set is None:
        mode_set = list(range(-((k_out - 1) // 2), k_out // 2 + 1))
    else:
        bad = [m for m in mode_set if 2 * abs(m) >= k_out]
        if bad:
            raise ModeError(f"modes {bad} alias on a ring of {k_out} spots")
    ks = np.arange(k_out)
    analyser = np.exp(-1j * TWO_PI * np.outer(mode_set, ks) / k_out) / np.sqrt(k_out)
    return ModeVector(tuple(mode_set), analyser @ a)


def propagate(modes: ModeVector, fiber: FiberSpec) -> tuple[ModeVector, dict[int, float]]:
    """Apply fiber mixing and loss; also return the per-mode group delays (ns)."""
    if modes.modes != fiber.mode_set:
        lookup = {m: c for m, c in zip(modes.modes, modes.amplitudes)}
        missing = set(modes.modes) - set(fiber.mode_set)
        if missing:
            raise ModeError(f"modes {sorted(missing)} not guided by the fiber")
        amps = np.array([lookup.get(m, 0.0) for m in fiber.mode_set], dtype=complex)
    else:
        amps = modes.amplitudes
    out = fiber.coupling.matrix @ amps * 10.0 ** (-fiber.loss_db / 20.0)
    return ModeVector(fiber.mode_set, out), dict(fiber.group_delay_ns)


def demux_slm(modes: ModeVector, target: int, coupling_loss_db: float = 15.0) -> complex:
    """SLM conversion of ``target`` to a Gaussian followed by single-mode fiber
    coupling; every other mode is rejected by the single-mode fiber."""
    if target not in modes.modes:
        raise ModeError(f"target mode {target} not in {modes.modes}")
    return modes[target] * 10.0 ** (-coupling_loss_db / 20.0)


@dataclass(frozen=True)
class CrosstalkMatrix:
    """Entry ``values[i, j]``: power in output mode ``modes[i]`` relative to the
    power in input mode ``modes[j]`` when only ``modes[j]`` is excited, in dB."""

    modes: tuple[int, ...]
    values: np.ndarray = field(repr=False)
    degenerate: tuple[int, ...] = ()

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        object.__setattr__(self, "values", vals)

    def entry(self, out_mode: int, in_mode: int) -> float:
        return float(self.values[self.modes.index(out_mode), self.modes.index(in_mode)])

    def off_diagonal(self) -> np.ndarray:
        mask = ~np.eye(len(self.modes), dtype=bool)
        return self.values[mask]

    @property
    def worst(self) -> float:
        return float(np.nanmax(self.off_diagonal()))

    @property
    def best(self) -> float:
        return float(np.nanmin(self.off_diagonal()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["out\\in", *self.modes])
        for i, m in enumerate(self.modes):
            writer.writerow([m, *(f"{v:.2f}" for v in self.values[i])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CrosstalkMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        modes = tuple(int(x) for x in rows[0][1:])
        values = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
        return cls(modes, values)

    def to_dict(self) -> dict:
        return {
            "modes": list(self.modes),
            "values_db": [[None if np.isnan(v) else round(float(v), 6) for v in row] for row in self.values],
            "degenerate": list(self.degenerate),
            "worst_db": self.worst,
            "best_db": self.best,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _ratio_matrix(modes: Sequence[int], power: np.ndarray) -> CrosstalkMatrix:
    """``power[i, j]``: power in output i for input j (linear)."""
    n = len(modes)
    values = np.full((n, n), np.nan)
    degenerate = []
    for j in range(n):
        own = power[j, j]
        if not own > 0:
            degenerate.append(modes[j])
            continue
        values[:, j] = 10.0 * np.log10(np.maximum(power[:, j] / own, DB_FLOOR))
        values[j, j] = 0.0
    return CrosstalkMatrix(tuple(modes), values, tuple(degenerate))


@dataclass(frozen=True)
class OAMLink:
    """Chip, heater setting and fiber: everything upstream of the SLM."""

    geometry: ChipGeometry = field(default_factory=ChipGeometry)
    heaters: HeaterState | None = None
    fiber: FiberSpec = field(default_factory=FiberSpec)

    def received(self, excitations: Sequence[tuple[int, complex]]) -> ModeVector:
        chip_field = multiplex(excitations, self.geometry, self.heaters)
        fiber_in = project(chip_field, self.fiber.mode_set)
        out, _ = propagate(fiber_in, self.fiber)
        return out


def crosstalk_power(
    link: OAMLink, probe_modes: Sequence[int], coupling_loss_db: float = 15.0
) -> CrosstalkMatrix:
    """Excite one mode at a time, demultiplex every probe and compare powers."""
    if not probe_modes:
        raise ValueError("probe_modes must be non-empty")
    n = len(probe_modes)
    power = np.zeros((n, n))
    for j, ell in enumerate(probe_modes):
        out = link.received([(ell, 1.0)])
        for i, m in enumerate(probe_modes):
            power[i, j] = abs(demux_slm(out, m, coupling_loss_db)) ** 2
    return _ratio_matrix(probe_modes, power)


def impulse_response(
    link: OAMLink,
    probe_modes: Sequence[int],
    pulse_width_ns: float = 0.05,
    samples_per_pulse: int = 41,
) -> list[tuple[int, float, float]]:
    """Synthetic time-of-flight record: ``(input mode, arrival ns, power)``.

    Each excited input is launched alone; light in fiber mode ``m`` arrives at
    that mode's group delay as a Gaussian pulse of RMS width ``pulse_width_ns``,
    sampled at ``samples_per_pulse`` points over +-4 widths.
    """
    offsets = np.linspace(-4.0, 4.0, samples_per_pulse) * pulse_width_ns
    shape = np.exp(-0.5 * (offsets / pulse_width_ns) ** 2)
    shape /= shape.sum()
    records = []
    for ell in probe_modes:
        out = link.received([(ell, 1.0)])
        for m, c in zip(out.modes, out.amplitudes):
            p = abs(c) ** 2
            if p == 0.0:
                continue
            delay = link.fiber.group_delay_ns[m]
            records.extend((ell, delay + dt, p * w) for dt, w in zip(offsets, shape))
    return records


def crosstalk_time_of_flight(
    impulse_response: Sequence[tuple[int, float, float]],
    mode_delays: Mapping[int, float],
    bin_width: float,
    probe_modes: Sequence[int] | None = None,
) -> CrosstalkMatrix:
    """Crosstalk from arrival-time histograms.

    Arrivals are histogrammed with ``bin_width`` (ns). The power of output mode
    ``m`` is the histogram mass within half the smallest spacing between any two
    configured delays, centred on that mode's delay. ``mode_delays`` should list
    every guided mode, not only the probes, so unprobed modes stay out of the
    integration windows.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    inputs = sorted({int(r[0]) for r in impulse_response})
    modes = list(probe_modes) if probe_modes is not None else inputs
    delays = {int(m): float(t) for m, t in mode_delays.items()}
    missing = set(modes) - set(delays)
    if missing:
        raise ModeError(f"no configured delay for modes {sorted(missing)}")
    ordered = sorted(delays.items(), key=lambda kv: kv[1])
    for (ma, ta), (mb, tb) in zip(ordered, ordered[1:]):
        if tb - ta <= 2.0 * bin_width:
            raise ResolutionError(
                f"modes {ma} and {mb} arrive {tb - ta:g} ns apart, "
                f"not resolvable with {bin_width:g} ns bins"
            )
    if len(ordered) > 1:
        half = min(tb - ta for (_, ta), (_, tb) in zip(ordered, ordered[1:])) / 2.0
    else:
        half = 10.0 * bin_width

    records = np.array([(r[0], r[1], r[2]) for r in impulse_response], dtype=float)
    lo = min(delays.values()) - half - bin_width
    hi = max(delays.values()) + half + bin_width
    edges = np.arange(lo, hi + bin_width, bin_width)
    centers = 0.5 * (edges[1:] + edges[:-1])

    n = len(modes)
    power = np.zeros((n, n))
    for j, ell in enumerate(modes):
        sel = records[:, 0] == ell
        hist, _ = np.histogram(records[sel, 1], bins=edges, weights=records[sel, 2])
        for i, m in enumerate(modes):
            window = np.abs(centers - delays[m]) < half
            power[i, j] = hist[window].sum()
    return _ratio_matrix(modes, power)


def calibrate_coupling_strength(
    make_link,
    probe_modes: Sequence[int],
    target_db: float,
    statistic: Literal["worst", "best"] = "worst",
    max_strength: float = np.pi,
) -> float:
    """Strength ``s`` such that ``make_link(s)`` reaches ``target_db`` on the
    chosen off-diagonal statistic of the power-method crosstalk matrix."""

    def stat(s: float) -> float:
        xt = crosstalk_power(make_link(s), probe_modes)
        return (xt.worst if statistic == "worst" else xt.best) - target_db

    lo, hi = 1e-6, 1e-3
    if stat(lo) > 0:
        raise ValueError("target crosstalk already exceeded at vanishing coupling")
    while stat(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > max_strength:
            raise ValueError(f"target {target_db} dB unreachable for {statistic} statistic")
    return float(brentq(stat, lo, hi, xtol=1e-12))

"""Star-coupler OAM emitter model.

An input port selects the topological charge ``ell``; the chip emits a ring of
``K`` point-like spots whose phases wind by ``2*pi*ell`` around the ring. Each
output waveguide carries a thermal heater that adds a phase trim.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class PortError(ValueError):
    """Raised for an unsupported or duplicated input port."""


@dataclass(frozen=True)
class ChipGeometry:
    num_outputs: int = 26
    min_port: int = -7
    max_port: int = 7
    insertion_loss_db: float = 22.0

    def __post_init__(self):
        if self.num_outputs < 1:
            raise ValueError("num_outputs must be positive")
        if self.min_port > self.max_port:
            raise ValueError("empty port range")
        if self.insertion_loss_db < 0:
            raise ValueError("insertion_loss_db must be non-negative")
        widest = max(abs(self.min_port), abs(self.max_port))
        if self.num_outputs < 2 * widest + 1:
            raise ValueError(
                f"K={self.num_outputs} cannot carry |ell|={widest} without aliasing"
            )

    @property
    def supported_ports(self) -> range:
        return range(self.min_port, self.max_port + 1)

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.insertion_loss_db / 10.0)

    def check_port(self, port: int) -> None:
        if port not in self.supported_ports:
            raise PortError(
                f"port {port} outside supported range [{self.min_port}, {self.max_port}]"
            )


@dataclass(frozen=True)
class HeaterState:
    """Per-output phase trims in radians, wrapped to [-pi, pi)."""

    phase_trim: np.ndarray = field(repr=False)

    def __post_init__(self):
        trim = np.asarray(self.phase_trim, dtype=float).reshape(-1)
        trim = (trim + np.pi) % TWO_PI - np.pi
        trim.setflags(write=False)
        object.__setattr__(self, "phase_trim", trim)

    @classmethod
    def zeros(cls, k: int) -> "HeaterState":
        return cls(np.zeros(k))

    @classmethod
    def random(cls, k: int, sigma: float, seed: int | None = None) -> "HeaterState":
        """Gaussian heater misalignment with standard deviation ``sigma`` rad."""
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, sigma, k))

    def __len__(self) -> int:
        return self.phase_trim.size

    def to_list(self) -> list[float]:
        return [float(x) for x in self.phase_trim]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "HeaterState":
        return cls(np.asarray(values, dtype=float))


@dataclass(frozen=True)
class EmitterField:
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def __len__(self) -> int:
        return self.amplitudes.size

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def __add__(self, other: "EmitterField") -> "EmitterField":
        return EmitterField(self.amplitudes + other.amplitudes)

    def scaled(self, factor: complex) -> "EmitterField":
        return EmitterField(self.amplitudes * factor)


def _check_heaters(geometry: ChipGeometry, heaters: HeaterState | None) -> np.ndarray:
    if heaters is None:
        return np.zeros(geometry.num_outputs)
    if len(heaters) != geometry.num_outputs:
        raise ValueError(
            f"heater state has {len(heaters)} entries, chip has {geometry.num_outputs} outputs"
        )
    return heaters.phase_trim


def emit_field(
    port: int,
    geometry: ChipGeometry,
    heaters: HeaterState | None = None,
    input_power: float = 1.0,
) -> EmitterField:
    """Field on the output ring for light injected into ``port``.

    ``a_k = sqrt(P * T / K) * exp(i (2 pi ell k / K + delta_k))`` with ``T`` the
    chip transmission.
    """
    geometry.check_port(port)
    if input_power <= 0:
        raise ValueError("input_power must be positive")
    trim = _check_heaters(geometry, heaters)
    k = np.arange(geometry.num_outputs)
    scale = np.sqrt(input_power * geometry.transmission / geometry.num_outputs)
    return EmitterField(scale * np.exp(1j * (TWO_PI * port * k / geometry.num_outputs + trim)))


def multiplex(
    excitations: Iterable[tuple[int, complex]],
    geometry: ChipGeometry,
    heaters: HeaterState | None = None,
) -> EmitterField:
    """Coherent sum of several simultaneously driven input ports."""
    excitations = list(excitations)
    ports = [p for p, _ in excitations]
    if len(set(ports)) != len(ports):
        raise PortError(f"duplicate ports in {ports}")
    total = np.zeros(geometry.num_outputs, dtype=complex)
    for port, amplitude in excitations:
        total += amplitude * emit_field(port, geometry, heaters).amplitudes
    return EmitterField(total)


def winding_steps(field_: EmitterField) -> np.ndarray:
    """Phase increments between neighbouring spots, wrapped to (-pi, pi]."""
    a = field_.amplitudes
    return np.angle(a[1:] / a[:-1])


def chip_crosstalk_objective(
    target_ports: Sequence[int], geometry: ChipGeometry
) -> Callable[[HeaterState], float]:
    """Worst port-to-port leakage (dB) of the chip alone, for heater calibration."""
    ports = np.asarray(list(target_ports))
    k = np.arange(geometry.num_outputs)
    # rows: projection onto harmonic m; cols: spot k
    analyser = np.exp(-1j * TWO_PI * np.outer(ports, k) / geometry.num_outputs)
    ideal = np.exp(1j * TWO_PI * np.outer(ports, k) / geometry.num_outputs)
    off = ~np.eye(ports.size, dtype=bool)

    def objective(heaters: HeaterState) -> float:
        fields = ideal * np.exp(1j * heaters.phase_trim)[None, :]
        power = np.abs(fields @ analyser.T) ** 2  # [input, output]
        if ports.size < 2:
            return -np.inf
        ratio = power / np.diag(power)[:, None]
        return float(10.0 * np.log10(max(ratio[off].max(), 1e-300)))

    return objective


def calibrate_heaters(
    target_ports: Sequence[int],
    misaligned: HeaterState,
    rounds: int,
    objective: Callable[[HeaterState], float],
    grid_points: int = 64,
) -> HeaterState:
    """Cyclic coordinate descent over the heater phases.

    Each round visits every heater once and tries ``grid_points`` evenly spaced
    absolute phases in [-pi, pi) plus the current value. The best candidate wins;
    ties go to the smaller |phase|. Since the current value is always a
    candidate, the objective never increases.
    """
    if not list(target_ports):
        raise ValueError("target_ports must be non-empty")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    grid = -np.pi + TWO_PI * np.arange(grid_points) / grid_points
    trim = misaligned.phase_trim.copy()
    best = objective(HeaterState(trim))
    for _ in range(rounds):
        for k in range(trim.size):
            current = trim[k]
            choice, choice_val = current, best
            for candidate in grid:
                trim[k] = candidate
                val = objective(HeaterState(trim))
                if val < choice_val or (val == choice_val and abs(candidate) < abs(choice)):
                    choice, choice_val = candidate, val
            trim[k] = choice
            best = choice_val
    return HeaterState(trim)

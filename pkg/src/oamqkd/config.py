"""Scenario configuration: one JSON document per experiment.

Every section maps onto a dataclass of the model modules. Validation runs the
document through a JSON schema first so errors carry a field path.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .detection import DetectorSpec, ReceiverSpec
from .emitter import ChipGeometry
from .protocol import ProtocolParams
from .security import SecurityParams

PRESETS = ("2mode", "3mode")


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


@dataclass(frozen=True)
class HeaterConfig:
    sigma_rad: float = 0.2
    seed: int = 11
    calibration_rounds: int = 6
    grid_points: int = 64


@dataclass(frozen=True)
class FiberConfig:
    mode_set: tuple[int, ...] = tuple(range(-7, 8))
    length_m: float = 800.0
    loss_db: float = 1.0
    group_delay_ns: dict[int, float] | None = None
    coupling_seed: int = 0
    coupling_target_db: float = -12.0
    coupling_statistic: str = "worst"
    coupling_strength: float | None = None


@dataclass(frozen=True)
class ModeConfig:
    """One multiplexed channel with its fitted receiver-side parameters."""

    ell: int
    mu1: float
    mu2: float
    coupling_loss_db: float = 15.0
    visibility: float = 0.92
    z_error: float = 0.0
    # in-gate light from all other modes, relative to this mode's own, dB
    leak_db: float | None = None


@dataclass(frozen=True)
class ProtocolConfig:
    p_mu1: float = 0.7
    p_Z: float = 0.9
    qubit_rate_hz: float = 5.95e8
    bin_separation_ps: float = 800.0
    entropy: str = "prbs"


@dataclass(frozen=True)
class PLLConfig:
    gain_per_s: float = 200.0
    dt_s: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    duration_s: float = 300.0
    # Monte-Carlo pulses per mode; None simulates the full duration
    simulated_pulses: float | None = None
    block_pulses: float = 1e9


@dataclass(frozen=True)
class StabilityConfig:
    mode: int = -7
    mu1: float = 0.24
    mu2: float = 0.13
    duration_s: float = 4500.0
    window_s: float = 75.0
    pulses_per_window: float = 1e9
    z_error: float | None = None
    visibility: float | None = None
    pll_enabled: bool = True
    drift_enabled: bool = True
    pll_gain_per_s: float = 2.0
    pll_dt_s: float = 0.1
    drift_sigma_rad_per_sqrt_s: float = 0.2
    heater_initial_sigma_rad: float = 0.1
    heater_relax_s: float = 1500.0
    heater_noise_rad_per_sqrt_s: float = 0.0005


@dataclass(frozen=True)
class CrosstalkConfig:
    tof_bin_ns: float = 0.1
    pulse_width_ns: float = 0.05


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    seed: int = 2021
    chip: ChipGeometry = field(default_factory=ChipGeometry)
    heaters: HeaterConfig = field(default_factory=HeaterConfig)
    fiber: FiberConfig = field(default_factory=FiberConfig)
    modes: tuple[ModeConfig, ...] = (ModeConfig(-7, 0.26, 0.13),)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    receiver: ReceiverSpec = field(default_factory=ReceiverSpec)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    pll: PLLConfig = field(default_factory=PLLConfig)
    security: SecurityParams = field(default_factory=SecurityParams)
    run: RunConfig = field(default_factory=RunConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    crosstalk: CrosstalkConfig = field(default_factory=CrosstalkConfig)

    def __post_init__(self):
        if not self.modes:
            raise ConfigError("at least one mode required", "modes")
        ells = [m.ell for m in self.modes]
        if len(set(ells)) != len(ells):
            raise ConfigError(f"duplicate modes {ells}", "modes")
        for i, m in enumerate(self.modes):
            if m.ell not in self.fiber.mode_set:
                raise ConfigError(
                    f"mode {m.ell} is not guided by the fiber (mode_set {list(self.fiber.mode_set)})",
                    f"modes[{i}].ell",
                )
        if self.stability.mode not in ells:
            raise ConfigError(f"stability mode {self.stability.mode} not among {ells}", "stability.mode")
        if self.run.duration_s <= 0:
            raise ConfigError("duration must be positive", "run.duration_s")

    @property
    def ells(self) -> list[int]:
        return [m.ell for m in self.modes]

    def mode(self, ell: int) -> ModeConfig:
        for m in self.modes:
            if m.ell == ell:
                return m
        raise ConfigError(f"mode {ell} not configured", "modes")

    def protocol_params(self, mode: ModeConfig | None = None, mu1=None, mu2=None) -> ProtocolParams:
        p = self.protocol
        return ProtocolParams(
            mu1=mu1 if mu1 is not None else mode.mu1,
            mu2=mu2 if mu2 is not None else mode.mu2,
            p_mu1=p.p_mu1,
            p_Z=p.p_Z,
            qubit_rate_hz=p.qubit_rate_hz,
            bin_separation_ps=p.bin_separation_ps,
        )

    def receiver_for(self, mode: ModeConfig) -> ReceiverSpec:
        return replace(self.receiver, visibility=mode.visibility, z_error=mode.z_error)

    def link_loss_db(self, mode: ModeConfig) -> float:
        """Fiber + demux coupling + synchronisation penalty. The chip loss is
        upstream of the point where mu is defined."""
        return self.fiber.loss_db + mode.coupling_loss_db + self.receiver.sync_loss_db

    def leak_fraction(self, mode: ModeConfig) -> float:
        """In-gate leak from each other mode (total split evenly)."""
        if mode.leak_db is None or len(self.modes) < 2:
            return 0.0
        return 10.0 ** (mode.leak_db / 10.0) / (len(self.modes) - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fiber"]["mode_set"] = list(self.fiber.mode_set)
        if self.fiber.group_delay_ns is not None:
            d["fiber"]["group_delay_ns"] = {str(k): v for k, v in self.fiber.group_delay_ns.items()}
        d["modes"] = [asdict(m) for m in self.modes]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


_NUM = {"type": "number"}
_INT = {"type": "integer"}


def _section(cls, overrides: dict | None = None) -> dict:
    props = {}
    for f in fields(cls):
        t = str(f.type)
        if "bool" in t:
            props[f.name] = {"type": "boolean"}
        elif t.startswith("int") and "None" not in t:
            props[f.name] = _INT
        elif "float" in t or "int" in t:
            props[f.name] = {"type": ["number", "null"]} if "None" in t else _NUM
        elif "str" in t:
            props[f.name] = {"type": "string"}
    props.update(overrides or {})
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "OAM-multiplexed QKD scenario",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "chip": _section(ChipGeometry),
        "heaters": _section(HeaterConfig),
        "fiber": _section(
            FiberConfig,
            {
                "mode_set": {"type": "array", "items": _INT, "minItems": 1},
                "group_delay_ns": {
                    "type": ["object", "null"],
                    "additionalProperties": _NUM,
                },
                "coupling_statistic": {"enum": ["worst", "best"]},
                "coupling_strength": {"type": ["number", "null"], "minimum": 0},
            },
        ),
        "modes": {
            "type": "array",
            "minItems": 1,
            "items": {
                **_section(ModeConfig, {"leak_db": {"type": ["number", "null"]}}),
                "required": ["ell", "mu1", "mu2"],
            },
        },
        "protocol": _section(ProtocolConfig, {"entropy": {"enum": ["prbs", "rng"]}}),
        "receiver": _section(ReceiverSpec),
        "detector": _section(DetectorSpec),
        "pll": _section(PLLConfig),
        "security": _section(SecurityParams),
        "run": _section(RunConfig),
        "stability": _section(StabilityConfig),
        "crosstalk": _section(CrosstalkConfig),
    },
}


def _path(err: jsonschema.ValidationError) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def _build(cls, data: dict | None, path: str):
    try:
        return cls(**(data or {}))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from exc


def from_dict(doc: dict) -> ScenarioConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _path(err))
    fiber = dict(doc.get("fiber", {}))
    if "mode_set" in fiber:
        fiber["mode_set"] = tuple(fiber["mode_set"])
    if fiber.get("group_delay_ns") is not None:
        fiber["group_delay_ns"] = {int(k): float(v) for k, v in fiber["group_delay_ns"].items()}
    modes = tuple(_build(ModeConfig, m, f"modes[{i}]") for i, m in enumerate(doc.get("modes", [])))
    kwargs = dict(
        chip=_build(ChipGeometry, doc.get("chip"), "chip"),
        heaters=_build(HeaterConfig, doc.get("heaters"), "heaters"),
        fiber=_build(FiberConfig, fiber, "fiber"),
        protocol=_build(ProtocolConfig, doc.get("protocol"), "protocol"),
        receiver=_build(ReceiverSpec, doc.get("receiver"), "receiver"),
        detector=_build(DetectorSpec, doc.get("detector"), "detector"),
        pll=_build(PLLConfig, doc.get("pll"), "pll"),
        security=_build(SecurityParams, doc.get("security"), "security"),
        run=_build(RunConfig, doc.get("run"), "run"),
        stability=_build(StabilityConfig, doc.get("stability"), "stability"),
        crosstalk=_build(CrosstalkConfig, doc.get("crosstalk"), "crosstalk"),
    )
    if modes:
        kwargs["modes"] = modes
    for key in ("name", "seed"):
        if key in doc:
            kwargs[key] = doc[key]
    return ScenarioConfig(**kwargs)


def load(path: str | Path) -> ScenarioConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return from_dict(doc)


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}", "preset")
    text = resources.files("oamqkd.presets").joinpath(f"{name}.json").read_text()
    return from_dict(json.loads(text))


def seed_sequence(master: int, *key: int) -> np.random.SeedSequence:
    """Per-task stream: ``SeedSequence(master, spawn_key=key)``.

    Keys used by the scenario runner: ``(purpose, mode_index, block_index)``
    with purpose 1 = detection, 2 = sifting, 3 = PLL phase, 4 = heater drift,
    5 = symbol entropy.
    """
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))


def prbs_seed(master: int, mode_index: int) -> int:
    """Nonzero 12-bit PRBS start state for a mode."""
    return int(seed_sequence(master, 5, mode_index).generate_state(1)[0] % 4095) + 1

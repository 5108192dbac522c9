"""Simulator for OAM-multiplexed time-bin QKD: star-coupler emitter, ring-core
fiber channel, three-state 1-decoy protocol, photon counting and finite-key
analysis."""

from .config import ScenarioConfig, load, load_preset

__all__ = ["ScenarioConfig", "load", "load_preset"]
__version__ = "0.1.0"

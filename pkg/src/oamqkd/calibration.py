"""Least-squares fit of per-mode receiver parameters to measured QBERs.

The fit runs on the analytic rate model (``expected_tally``), which carries the
same physics as the Monte-Carlo engine, so fitted values transfer directly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from scipy.optimize import least_squares

from .config import ModeConfig, ScenarioConfig
from .detection import LeakSource, expected_tally

QBER_KEYS = ("Q_Z_mu1", "Q_Z_mu2", "Q_X_mu1", "Q_X_mu2")

# parameter vector: z_error, leak_db, visibility, coupling_loss_db
LOWER = np.array([0.0, -40.0, 0.5, 10.0])
UPPER = np.array([0.1, -5.0, 1.0, 20.0])
START = np.array([0.01, -20.0, 0.92, 15.0])


@dataclass(frozen=True)
class ReferenceMode:
    ell: int
    mu1: float
    mu2: float
    qber_percent: tuple[float, float, float, float]


def reference_tables() -> dict[str, list[ReferenceMode]]:
    """Measured per-mode QBERs (percent) shipped with the presets."""
    doc = json.loads(resources.files("oamqkd.presets").joinpath("reference_qber.json").read_text())
    return {
        name: [ReferenceMode(m["ell"], m["mu1"], m["mu2"], tuple(m[k] for k in QBER_KEYS)) for m in modes]
        for name, modes in doc.items()
    }


def model_qbers(cfg: ScenarioConfig, mode: ModeConfig, n_pulses: float = 1e10) -> np.ndarray:
    """Expected [Q_Z_mu1, Q_Z_mu2, Q_X_mu1, Q_X_mu2] in percent."""
    proto = cfg.protocol_params(mode)
    frac = cfg.leak_fraction(mode)
    leaks = [LeakSource(cfg.protocol_params(o), frac) for o in cfg.modes if o.ell != mode.ell and frac > 0]
    n, m = expected_tally(
        proto, cfg.link_loss_db(mode), cfg.receiver_for(mode), cfg.detector, n_pulses, leaks
    )
    return 100.0 * (m / n).ravel()


def _with_params(cfg: ScenarioConfig, ell: int, x: np.ndarray) -> ScenarioConfig:
    z, leak_db, vis, cl = (float(v) for v in x)
    modes = tuple(
        replace(m, z_error=z, leak_db=leak_db, visibility=vis, coupling_loss_db=cl) if m.ell == ell else m
        for m in cfg.modes
    )
    return replace(cfg, modes=modes)


def fit_mode(cfg: ScenarioConfig, ref: ReferenceMode) -> tuple[ModeConfig, np.ndarray]:
    """Fit one mode; the other modes only enter as leak sources through their
    mean photon numbers. Returns the fitted mode and residuals (pp)."""
    target = np.asarray(ref.qber_percent)

    def resid(x):
        trial = _with_params(cfg, ref.ell, x)
        return model_qbers(trial, trial.mode(ref.ell)) - target

    sol = least_squares(resid, START, bounds=(LOWER, UPPER), xtol=1e-12, ftol=1e-12)
    x = np.round(sol.x, 6)
    fitted = _with_params(cfg, ref.ell, x)
    return fitted.mode(ref.ell), resid(x)


def fit_preset(cfg: ScenarioConfig, refs: list[ReferenceMode]) -> tuple[ScenarioConfig, dict[int, np.ndarray]]:
    modes = tuple(ModeConfig(r.ell, r.mu1, r.mu2) for r in refs)
    cfg = replace(cfg, modes=modes)
    residuals = {}
    fitted = []
    for ref in refs:
        mode, res = fit_mode(cfg, ref)
        fitted.append(mode)
        residuals[ref.ell] = res
    return replace(cfg, modes=tuple(fitted)), residuals

"""Finite-key analysis for the one-decoy, three-state time-bin protocol.

Event bounds use Hoeffding's inequality on the counts sifted per intensity;
the single-photon phase error in Z is estimated from X-basis errors with a
random-sampling correction. The key length is

    l = s0 + s1 * (1 - h(phi)) - f_ec * n_Z * h(Q_Z)
        - 6 log2(19 / eps_sec) - log2(2 / eps_corr)

floored at zero.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .detection import (
    DetectorSpec,
    LeakSource,
    ReceiverSpec,
    TallyBlock,
    expected_tally,
)
from .protocol import ProtocolParams

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SecurityParams:
    eps_sec: float = 1e-9
    eps_corr: float = 1e-9
    f_ec: float = 1.16
    # share of eps_sec given to each Hoeffding deviation
    hoeffding_split: float = 19.0

    def __post_init__(self):
        for name in ("eps_sec", "eps_corr"):
            eps = getattr(self, name)
            if not 0 < eps < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.f_ec < 1:
            raise ValueError("f_ec must be >= 1")

    @property
    def eps_hoeffding(self) -> float:
        return self.eps_sec / self.hoeffding_split

    @property
    def penalty(self) -> float:
        return 6.0 * math.log2(19.0 / self.eps_sec) + math.log2(2.0 / self.eps_corr)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"binary entropy argument {p} outside [0, 1/2]")
    if p == 0.0:
        return 0.0
    return float(-p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p))


def _h(p: float) -> float:
    return binary_entropy(min(max(p, 0.0), 0.5))


def hoeffding(n: float, eps: float) -> float:
    return math.sqrt(n / 2.0 * math.log(1.0 / eps))


def _tau(j: int, mus: Sequence[float], probs: Sequence[float]) -> float:
    return sum(p * math.exp(-mu) * mu**j / math.factorial(j) for mu, p in zip(mus, probs))


def _gamma(a: float, b: float, c: float, d: float) -> float:
    """Random-sampling deviation between phase-error rates of two sets."""
    if b <= 0.0 or c <= 0 or d <= 0:
        return 0.0
    arg = (c + d) / (c * d * (1.0 - b) * b) * 21.0**2 / a**2
    val = (c + d) * (1.0 - b) * b / (c * d * LN2) * math.log2(arg)
    return math.sqrt(max(val, 0.0))


@dataclass(frozen=True)
class DecoyBounds:
    s0_lower: float
    s1_lower: float
    phi_upper: float
    s0_upper: float
    s1_x_lower: float
    nu1_x_upper: float


def _counts(tally) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(tally, TallyBlock):
        return tally.n.astype(float), tally.m.astype(float)
    n, m = tally
    return np.asarray(n, dtype=float).reshape(2, 2), np.asarray(m, dtype=float).reshape(2, 2)


def decoy_bounds(
    tally,
    mu1: float,
    mu2: float,
    params: SecurityParams = SecurityParams(),
    p_mu1: float = 0.7,
) -> DecoyBounds:
    """Vacuum / single-photon bounds from a tally (``TallyBlock`` or ``(n, m)``
    arrays indexed ``[basis][intensity]``)."""
    n, m = _counts(tally)
    if (m < 0).any() or (m > n).any():
        raise ValueError("impossible tally: need 0 <= m <= n")
    if not mu1 > mu2 > 0:
        raise ValueError("need mu1 > mu2 > 0")
    if (n.sum(axis=0) <= 0).any():
        raise ValueError("tally must have detections at both intensities")
    mus = (mu1, mu2)
    probs = (p_mu1, 1.0 - p_mu1)
    eps = params.eps_hoeffding
    tau0, tau1 = _tau(0, mus, probs), _tau(1, mus, probs)

    def scaled(count: float, k: int, sign: float, total: float) -> float:
        return math.exp(mus[k]) / probs[k] * (count + sign * hoeffding(total, eps))

    def s0_lower(b: int) -> float:
        tot = n[b].sum()
        val = tau0 / (mu1 - mu2) * (mu1 * scaled(n[b, 1], 1, -1, tot) - mu2 * scaled(n[b, 0], 0, +1, tot))
        return min(max(val, 0.0), tot)

    def s0_upper(b: int) -> float:
        val = 2.0 * (tau0 * scaled(m[b, 1], 1, +1, m[b].sum()) + hoeffding(n[b].sum(), eps))
        return min(max(val, 0.0), n[b].sum())

    def s1_lower(b: int, s0u: float, s0l: float) -> float:
        tot = n[b].sum()
        val = (mu1 * tau1 / (mu2 * (mu1 - mu2))) * (
            scaled(n[b, 1], 1, -1, tot)
            - (mu2 / mu1) ** 2 * scaled(n[b, 0], 0, +1, tot)
            - (mu1**2 - mu2**2) / mu1**2 * s0u / tau0
        )
        return min(max(val, 0.0), tot - s0l)

    s0z_l = s0_lower(0)
    s0z_u = s0_upper(0)
    s1z = s1_lower(0, s0z_u, s0z_l)
    s0x_u = s0_upper(1)
    s1x = s1_lower(1, s0x_u, s0_lower(1))

    mx_tot = m[1].sum()
    nu1 = tau1 / (mu1 - mu2) * (scaled(m[1, 0], 0, +1, mx_tot) - scaled(m[1, 1], 1, -1, mx_tot))
    nu1 = min(max(nu1, 0.0), n[1].sum())
    if s1z > 0 and s1x > 0:
        ratio = min(nu1 / s1x, 0.5)
        # zero observed errors still leave a one-sided binomial uncertainty
        b = max(ratio, min(math.log(1.0 / eps) / s1x, 0.5))
        phi = 0.5 if b >= 0.5 else min(ratio + _gamma(params.eps_sec, b, s1z, s1x), 0.5)
    else:
        phi = 0.5
    return DecoyBounds(s0z_l, s1z, phi, s0z_u, s1x, nu1)


def key_length(tally, bounds: DecoyBounds, params: SecurityParams = SecurityParams()) -> float:
    n, m = _counts(tally)
    n_z = n[0].sum()
    q_z = m[0].sum() / n_z if n_z else 0.5
    leak_ec = params.f_ec * n_z * _h(q_z)
    raw = bounds.s0_lower + bounds.s1_lower * (1.0 - _h(bounds.phi_upper)) - leak_ec - params.penalty
    return float(max(raw, 0.0))


def secret_key_rate(key_length_bits: float, duration_s: float) -> float:
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    return float(key_length_bits) / duration_s


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class ModeResult:
    mode: int
    mu1: float
    mu2: float
    tally: TallyBlock
    key_length_bits: float
    skr_bps: float

    def qbers(self) -> dict[str, float]:
        return {
            "Q_Z_mu1": self.tally.qber("Z", "mu1"),
            "Q_Z_mu2": self.tally.qber("Z", "mu2"),
            "Q_X_mu1": self.tally.qber("X", "mu1"),
            "Q_X_mu2": self.tally.qber("X", "mu2"),
        }


def analyze_mode(
    mode: int, tally: TallyBlock, protocol: ProtocolParams, params: SecurityParams = SecurityParams()
) -> ModeResult:
    bounds = decoy_bounds(tally, protocol.mu1, protocol.mu2, params, protocol.p_mu1)
    length = key_length(tally, bounds, params)
    return ModeResult(mode, protocol.mu1, protocol.mu2, tally, length, secret_key_rate(length, tally.duration_s))


TABLE_ROWS = ("mu1", "mu2", "Q_Z_mu1", "Q_Z_mu2", "Q_X_mu1", "Q_X_mu2")


@dataclass(frozen=True)
class KeyRateReport:
    modes: tuple[ModeResult, ...] = field(default_factory=tuple)

    @property
    def aggregate_skr(self) -> float:
        return float(sum(r.skr_bps for r in self.modes))

    def merge(self, other: "KeyRateReport") -> "KeyRateReport":
        return KeyRateReport(self.modes + other.modes)

    def to_dict(self) -> dict:
        return {
            "modes": [
                {
                    "mode": r.mode,
                    "mu1": r.mu1,
                    "mu2": r.mu2,
                    "key_length_bits": r.key_length_bits,
                    "skr_bps": r.skr_bps,
                    **r.qbers(),
                    "tally": r.tally.to_dict(),
                }
                for r in self.modes
            ],
            "aggregate_skr_bps": self.aggregate_skr,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def qber_table_csv(self) -> str:
        """Rows mu1, mu2 and the four QBERs (percent); one column per mode."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", *(f"mode {r.mode}" for r in self.modes)])
        for row in TABLE_ROWS:
            if row.startswith("Q"):
                w.writerow([row, *(repr(100.0 * r.qbers()[row]) for r in self.modes)])
            else:
                w.writerow([row, *(repr(getattr(r, row)) for r in self.modes)])
        return buf.getvalue()

    def skr_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "key_length_bits", "duration_s", "skr_bps"])
        for r in self.modes:
            w.writerow([r.mode, repr(r.key_length_bits), repr(r.tally.duration_s), repr(r.skr_bps)])
        w.writerow(["total", "", "", repr(self.aggregate_skr)])
        return buf.getvalue()


def parse_qber_table(text: str) -> dict[int, dict[str, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    modes = [int(h.split()[1]) for h in rows[0][1:]]
    out = {mode: {} for mode in modes}
    for row in rows[1:]:
        for mode, val in zip(modes, row[1:]):
            out[mode][row[0]] = float(val)
    return out


# ---------------------------------------------------------------- rate model and optimiser


@dataclass(frozen=True)
class RateModel:
    """Expected key rate of one mode as a function of (mu1, mu2)."""

    link_loss_db: float
    receiver: ReceiverSpec = field(default_factory=ReceiverSpec)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    base: ProtocolParams = field(default_factory=ProtocolParams)
    leaks: tuple[LeakSource, ...] = ()
    block_s: float = 300.0
    security: SecurityParams = field(default_factory=SecurityParams)

    def expected_counts(self, mu1: float, mu2: float) -> tuple[np.ndarray, np.ndarray]:
        proto = ProtocolParams(
            mu1=mu1,
            mu2=mu2,
            p_mu1=self.base.p_mu1,
            p_Z=self.base.p_Z,
            qubit_rate_hz=self.base.qubit_rate_hz,
            bin_separation_ps=self.base.bin_separation_ps,
        )
        return expected_tally(
            proto,
            self.link_loss_db,
            self.receiver,
            self.detector,
            self.block_s * proto.qubit_rate_hz,
            self.leaks,
        )

    def skr(self, mu1: float, mu2: float) -> float:
        counts = self.expected_counts(mu1, mu2)
        bounds = decoy_bounds(counts, mu1, mu2, self.security, self.base.p_mu1)
        return secret_key_rate(key_length(counts, bounds, self.security), self.block_s)


@dataclass(frozen=True)
class MuGrid:
    step: float = 0.01
    mu1_min: float = 0.01
    mu1_max: float = 1.0
    mu2_min: float = 0.01
    mu2_max: float = 1.0

    def points(self) -> list[tuple[float, float]]:
        def axis(lo, hi):
            k0, k1 = int(round(lo / self.step)), int(round(hi / self.step))
            return [round(k * self.step, 10) for k in range(k0, k1 + 1)]

        return [
            (a, b)
            for a in axis(self.mu1_min, self.mu1_max)
            for b in axis(self.mu2_min, self.mu2_max)
            if 0 < b < a <= 1.0
        ]


@dataclass(frozen=True)
class MuOptimum:
    mu1: float
    mu2: float
    skr: float
    surface: tuple[tuple[float, float, float], ...]

    def surface_csv(self) -> str:
        lines = ["mu1,mu2,skr_bps"]
        lines += [f"{a!r},{b!r},{s!r}" for a, b, s in self.surface]
        return "\n".join(lines) + "\n"


def optimize_mu(model: RateModel | Callable[[float, float], float], grid: MuGrid = MuGrid()) -> MuOptimum:
    """Exhaustive grid search for the highest predicted key rate.

    Ties go to the smaller mu1, then the smaller mu2.
    """
    points = grid.points()
    if not points:
        raise ValueError("grid contains no point with 0 < mu2 < mu1 <= 1")
    rate = model.skr if isinstance(model, RateModel) else model
    surface = tuple((a, b, float(rate(a, b))) for a, b in points)
    best = max(surface, key=lambda t: (t[2], -t[0], -t[1]))
    return MuOptimum(best[0], best[1], best[2], surface)

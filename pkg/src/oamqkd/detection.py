"""Receiver model for one demultiplexed mode.

A 90:10 splitter sends light either straight to the Z detector or through an
unbalanced Michelson interferometer whose delay equals the time-bin spacing.
The interferometer's two output ports feed two X detectors; the central time
bin at the dark port flags an X error. Clicks are generated by thinning: only
pulses that could plausibly click are ever looked at, so the cost scales with
the number of clicks rather than the number of pulses.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .protocol import Intensity, ProtocolParams, PulsePair, State, SymbolSequence, encode_many

DET_Z, DET_XB, DET_XD = 0, 1, 2
DETECTOR_NAMES = ("Z", "X_bright", "X_dark")
BASES = ("Z", "X")
INTENSITIES = ("mu1", "mu2")


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 0.83
    dark_cps: float = 50.0
    dead_time_ps: float = 33.0
    tag_resolution_ps: float = 1.0

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if min(self.dark_cps, self.dead_time_ps) < 0 or self.tag_resolution_ps <= 0:
            raise ValueError("rates and times must be non-negative")


@dataclass(frozen=True)
class ReceiverSpec:
    split_Z: float = 0.9
    split_X: float = 0.1
    interferometer_delay_ps: float = 800.0
    visibility: float = 0.92
    residual_phase_rms_rad: float = 0.0
    background_Z_cps: float = 4000.0
    background_X_cps: float = 200000.0
    sync_loss_db: float = 9.15
    gate_ps: float = 250.0
    z_error: float = 0.0

    def __post_init__(self):
        if abs(self.split_Z + self.split_X - 1.0) > 1e-12:
            raise ValueError("split_Z + split_X must equal 1")
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")
        if not 0 <= self.z_error <= 0.5:
            raise ValueError("z_error must lie in [0, 0.5]")
        if min(self.background_Z_cps, self.background_X_cps, self.gate_ps, self.sync_loss_db) < 0:
            raise ValueError("rates, losses and gates must be non-negative")

    def check_delay(self, params: ProtocolParams) -> None:
        if abs(self.interferometer_delay_ps - params.bin_separation_ps) > 1e-9:
            raise ValueError(
                f"interferometer delay {self.interferometer_delay_ps} ps does not match "
                f"bin separation {params.bin_separation_ps} ps"
            )

    def noise_cps(self, detector: DetectorSpec) -> np.ndarray:
        """Per-detector Poisson noise rate; X background is shared by both ports."""
        return np.array(
            [
                detector.dark_cps + self.background_Z_cps,
                detector.dark_cps + self.background_X_cps / 2.0,
                detector.dark_cps + self.background_X_cps / 2.0,
            ]
        )


# ---------------------------------------------------------------- interferometer


def interfere(
    pair: PulsePair,
    delay_ps: float,
    bin_separation_ps: float,
    visibility: float,
    residual_phase: float,
) -> np.ndarray:
    """Mean photon numbers at the two interferometer outputs.

    Returns an array ``[port, slot]`` with ports (bright, dark) and slots
    (early satellite, central, late satellite). Only the central slot carries
    interference: ``(e + l +- 2 V sqrt(e l) cos(phi)) / 4``; for ``X+`` this is
    ``mu (1 +- V cos(phi)) / 4``.
    """
    if abs(delay_ps - bin_separation_ps) > 1e-9:
        raise ValueError(
            f"interferometer delay {delay_ps} ps does not match bin separation {bin_separation_ps} ps"
        )
    central_b, central_d, sat_e, sat_l = _interfere_arrays(
        np.asarray(pair.early), np.asarray(pair.late), visibility, np.asarray(residual_phase)
    )
    return np.array(
        [[sat_e, central_b, sat_l], [sat_e, central_d, sat_l]], dtype=float
    )


def _interfere_arrays(early, late, visibility, phase):
    fringe = 2.0 * visibility * np.sqrt(early * late) * np.cos(phase)
    central_b = (early + late + fringe) / 4.0
    central_d = np.maximum((early + late - fringe) / 4.0, 0.0)
    return central_b, central_d, early / 4.0, late / 4.0


# ---------------------------------------------------------------- phase processes


@dataclass(frozen=True)
class PhaseTrace:
    """Piecewise-constant residual phase; step ``j`` covers pulses
    ``start_pulse + [j * pulses_per_step, (j + 1) * pulses_per_step)``."""

    phases: np.ndarray = field(repr=False)
    pulses_per_step: int
    start_pulse: int = 0

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float).reshape(-1)
        if ph.size == 0 or self.pulses_per_step < 1:
            raise ValueError("empty phase trace")
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def constant(cls, phase: float) -> "PhaseTrace":
        return cls(np.array([phase]), 2**62)

    def at(self, pulse_idx: np.ndarray) -> np.ndarray:
        rel = np.asarray(pulse_idx) - self.start_pulse
        step = np.clip(rel // self.pulses_per_step, 0, self.phases.size - 1)
        return self.phases[step]


def ou_stationary_rms(drift_sigma: float, gain: float, dt: float) -> float:
    """Stationary RMS of ``phi' = (1 - g dt) phi + drift_sigma sqrt(dt) xi``."""
    a = 1.0 - gain * dt
    if not abs(a) < 1.0:
        return float("inf")
    return float(drift_sigma * np.sqrt(dt / (1.0 - a * a)))


def drift_sigma_for_rms(rms: float, gain: float, dt: float) -> float:
    a = 1.0 - gain * dt
    return float(rms * np.sqrt((1.0 - a * a) / dt))


def pll_phase_process(
    drift_sigma: float,
    gain: float,
    dt: float,
    duration: float,
    seed=None,
    phi0: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Interferometer phase under random-walk drift and proportional feedback.

    ``drift_sigma`` is the drift diffusion in rad/sqrt(s), ``gain`` the loop
    gain in 1/s. Each step ``dt`` the actuator removes ``gain * dt`` of the
    current error. Returns sample times and phases (length ``round(duration/dt)``).
    """
    if gain < 0:
        raise ValueError("gain must be non-negative")
    if gain * dt >= 2.0:
        raise ValueError("loop unstable: gain * dt must stay below 2")
    n = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    kicks = drift_sigma * np.sqrt(dt) * rng.standard_normal(n)
    a = 1.0 - gain * dt
    if a == 1.0:
        phases = phi0 + np.cumsum(kicks)
    else:
        from scipy.signal import lfilter

        phases = lfilter([1.0], [1.0, -a], kicks, zi=[a * phi0])[0]
    return np.arange(n) * dt, phases


# ---------------------------------------------------------------- logs


@dataclass(frozen=True)
class ClickLog:
    detector: np.ndarray = field(repr=False)
    time_ps: np.ndarray = field(repr=False)

    def __post_init__(self):
        det = np.asarray(self.detector, dtype=np.int8).reshape(-1)
        t = np.asarray(self.time_ps, dtype=np.int64).reshape(-1)
        if det.shape != t.shape:
            raise ValueError("detector and time arrays differ in length")
        order = np.lexsort((det, t))
        det, t = det[order], t[order]
        det.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "detector", det)
        object.__setattr__(self, "time_ps", t)

    def __len__(self) -> int:
        return self.time_ps.size

    def for_detector(self, det: int) -> np.ndarray:
        return self.time_ps[self.detector == det]

    def min_spacing(self, det: int) -> float:
        t = self.for_detector(det)
        return float(np.diff(t).min()) if t.size > 1 else float("inf")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("detector_id,time_ps\n")
        for d, t in zip(self.detector, self.time_ps):
            buf.write(f"{d},{t}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ClickLog":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        if not rows:
            return cls(np.zeros(0), np.zeros(0))
        arr = np.array(rows, dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1])

    @staticmethod
    def concat(logs: Sequence["ClickLog"]) -> "ClickLog":
        return ClickLog(
            np.concatenate([l.detector for l in logs]), np.concatenate([l.time_ps for l in logs])
        )


@dataclass(frozen=True)
class TallyBlock:
    """Sifted detections ``n`` and errors ``m``, indexed ``[basis][intensity]``
    with basis (Z, X) and intensity (mu1, mu2)."""

    n: np.ndarray
    m: np.ndarray
    duration_s: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.int64).reshape(2, 2)
        m = np.asarray(self.m, dtype=np.int64).reshape(2, 2)
        if (m < 0).any() or (m > n).any():
            raise ValueError("tallies must satisfy 0 <= m <= n")
        n.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)

    @classmethod
    def empty(cls) -> "TallyBlock":
        return cls(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)

    def __add__(self, other: "TallyBlock") -> "TallyBlock":
        return TallyBlock(self.n + other.n, self.m + other.m, self.duration_s + other.duration_s)

    def qber(self, basis: str, intensity: str | None = None) -> float:
        b = BASES.index(basis)
        if intensity is None:
            n, m = self.n[b].sum(), self.m[b].sum()
        else:
            k = INTENSITIES.index(intensity)
            n, m = self.n[b, k], self.m[b, k]
        return float(m / n) if n else float("nan")

    def to_dict(self) -> dict:
        return {
            "n": {b: {k: int(self.n[i, j]) for j, k in enumerate(INTENSITIES)} for i, b in enumerate(BASES)},
            "m": {b: {k: int(self.m[i, j]) for j, k in enumerate(INTENSITIES)} for i, b in enumerate(BASES)},
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TallyBlock":
        n = [[d["n"][b][k] for k in INTENSITIES] for b in BASES]
        m = [[d["m"][b][k] for k in INTENSITIES] for b in BASES]
        return cls(np.array(n), np.array(m), float(d["duration_s"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ---------------------------------------------------------------- detection


@dataclass(frozen=True)
class Leak:
    """Light of a co-propagating mode landing in this mode's gates, as a
    fraction of its own launched mean photon number."""

    symbols: SymbolSequence
    fraction: float


def _bin_means(symbols: SymbolSequence, idx: np.ndarray, leaks: Sequence[Leak]):
    pattern_e, pattern_l = symbols.bin_pattern
    r = idx % symbols.period
    early, late = pattern_e[r], pattern_l[r]
    for leak in leaks:
        le, ll = leak.symbols.bin_pattern
        rr = r if leak.symbols.period == symbols.period else idx % leak.symbols.period
        early = early + leak.fraction * le[rr]
        late = late + leak.fraction * ll[rr]
    return early, late


def _slot_means(early, late, receiver: ReceiverSpec, phase, scale_z, scale_x):
    """Mean detected photon numbers for every (detector, slot) source."""
    z = receiver.z_error
    cb, cd, se, sl = _interfere_arrays(early, late, receiver.visibility, phase)
    return {
        (DET_Z, 0): scale_z * ((1 - z) * early + z * late),
        (DET_Z, 1): scale_z * ((1 - z) * late + z * early),
        (DET_XB, 0): scale_x * se,
        (DET_XB, 1): scale_x * cb,
        (DET_XB, 2): scale_x * sl,
        (DET_XD, 0): scale_x * se,
        (DET_XD, 1): scale_x * cd,
        (DET_XD, 2): scale_x * sl,
    }


def _slot_mean(early, late, receiver: ReceiverSpec, phase, scale_z, scale_x, det: int, slot: int):
    """One entry of ``_slot_means``, computing only what it needs."""
    z = receiver.z_error
    if det == DET_Z:
        own, other = (early, late) if slot == 0 else (late, early)
        return scale_z * ((1 - z) * own + z * other)
    if slot == 0:
        return scale_x * early / 4.0
    if slot == 2:
        return scale_x * late / 4.0
    fringe = 2.0 * receiver.visibility * np.sqrt(early * late) * np.cos(phase)
    if det == DET_XB:
        return scale_x * (early + late + fringe) / 4.0
    return scale_x * np.maximum((early + late - fringe) / 4.0, 0.0)


def _candidates(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Indices in ``[0, n)`` of independent Bernoulli(p) successes."""
    if p <= 0.0 or n <= 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n, dtype=np.int64)
    out = []
    pos = -1
    while True:
        expected = (n - pos) * p
        size = int(expected + 6.0 * np.sqrt(expected) + 16)
        steps = np.cumsum(rng.geometric(p, size=size)) + pos
        out.append(steps[steps < n])
        if steps[-1] >= n:
            break
        pos = int(steps[-1])
    return np.concatenate(out).astype(np.int64)


def _apply_dead_time(det: np.ndarray, t: np.ndarray, dead: float) -> tuple[np.ndarray, np.ndarray]:
    """Non-paralysable dead time, applied causally per detector."""
    keep_det, keep_t = [], []
    for d in np.unique(det):
        times = np.sort(t[det == d])
        keep = np.ones(times.size, dtype=bool)
        close = np.nonzero(np.diff(times) < dead)[0] + 1
        for i in close:
            j = i - 1
            while not keep[j]:
                j -= 1
            if times[i] - times[j] < dead:
                keep[i] = False
        keep_det.append(np.full(keep.sum(), d, dtype=np.int8))
        keep_t.append(times[keep])
    if not keep_t:
        return np.zeros(0, dtype=np.int8), np.zeros(0, dtype=np.int64)
    return np.concatenate(keep_det), np.concatenate(keep_t)


def detect_block(
    symbols: SymbolSequence,
    params: ProtocolParams,
    link_loss_db: float,
    receiver: ReceiverSpec,
    detector: DetectorSpec,
    seed=None,
    *,
    leaks: Sequence[Leak] = (),
    phase: PhaseTrace | float = 0.0,
    start_pulse: int = 0,
    n_pulses: int | None = None,
) -> ClickLog:
    """Monte-Carlo click record for pulses ``[start_pulse, start_pulse + n_pulses)``.

    Photon numbers per time bin are Poisson with mean
    ``mu_bin * 10**(-link_loss_db/10) * split * efficiency``; a detector clicks
    in a slot when at least one photon arrives. Dark counts and background are
    homogeneous Poisson processes over the block. Pulse ``i`` starts at
    ``i * period`` ps; the early bin is at offset 0 and the late bin at the bin
    separation.
    """
    if link_loss_db < 0:
        raise ValueError("link_loss_db must be non-negative")
    receiver.check_delay(params)
    if n_pulses is None:
        n_pulses = len(symbols) - start_pulse
    if n_pulses <= 0:
        return ClickLog(np.zeros(0), np.zeros(0))
    if not isinstance(phase, PhaseTrace):
        phase = PhaseTrace.constant(float(phase))
    rng = np.random.default_rng(seed)

    transmission = 10.0 ** (-link_loss_db / 10.0)
    scale_z = transmission * receiver.split_Z * detector.efficiency
    scale_x = transmission * receiver.split_X * detector.efficiency
    period = params.period_ps
    sep = params.bin_separation_ps
    res = detector.tag_resolution_ps

    # upper bounds on each slot's mean, over all states and phases
    mu_max = max(symbols.mu1, symbols.mu2) + sum(
        l.fraction * max(l.symbols.mu1, l.symbols.mu2) for l in leaks
    )
    bound = {
        DET_Z: scale_z * mu_max,
        DET_XB: scale_x * mu_max / 2.0,
        DET_XD: scale_x * mu_max / 2.0,
    }
    slot_offsets = {DET_Z: (0.0, sep), DET_XB: (0.0, sep, 2 * sep), DET_XD: (0.0, sep, 2 * sep)}

    dets, times = [], []
    for det, offsets in slot_offsets.items():
        p_max = -np.expm1(-bound[det])
        for slot, offset in enumerate(offsets):
            cand = _candidates(rng, n_pulses, p_max) + start_pulse
            if cand.size == 0:
                continue
            early, late = _bin_means(symbols, cand, leaks)
            ph = phase.at(cand) if det != DET_Z and slot == 1 else 0.0
            lam = _slot_mean(early, late, receiver, ph, scale_z, scale_x, det, slot)
            accept = rng.random(cand.size) * p_max < -np.expm1(-lam)
            hit = cand[accept]
            dets.append(np.full(hit.size, det, dtype=np.int8))
            times.append(np.round((hit * period + offset) / res).astype(np.int64) * int(res))

    t0 = start_pulse * period
    span_s = n_pulses * period * 1e-12
    for det, rate in enumerate(receiver.noise_cps(detector)):
        k = rng.poisson(rate * span_s)
        if k:
            t = t0 + rng.random(k) * n_pulses * period
            dets.append(np.full(k, det, dtype=np.int8))
            times.append(np.round(t / res).astype(np.int64) * int(res))

    det_arr = np.concatenate(dets) if dets else np.zeros(0, dtype=np.int8)
    t_arr = np.concatenate(times) if times else np.zeros(0, dtype=np.int64)
    det_arr, t_arr = _apply_dead_time(det_arr, t_arr, detector.dead_time_ps)
    return ClickLog(det_arr, t_arr)


# ---------------------------------------------------------------- sifting


def sift(
    symbols: SymbolSequence,
    clicks: ClickLog,
    params: ProtocolParams,
    gate_ps: float,
    *,
    start_pulse: int = 0,
    n_pulses: int | None = None,
    seed=None,
) -> TallyBlock:
    """Match clicks to pulse slots and count detections and errors.

    Z detector clicks count for Z states sent; a click in the opposite bin is an
    error. X detector clicks in the central slot count for X+ states sent; a
    dark-port click is an error. When both outcomes fire for one pulse the bit
    is assigned at random (error with probability 1/2).
    """
    period = params.period_ps
    sep = params.bin_separation_ps
    if 2 * gate_ps >= sep or 2 * gate_ps > period:
        raise ValueError(
            f"gate +-{gate_ps} ps is too wide for {sep} ps bins in a {period:.1f} ps period"
        )
    if n_pulses is None:
        n_pulses = len(symbols) - start_pulse
    rng = np.random.default_rng(seed)
    stop = start_pulse + n_pulses
    n = np.zeros((2, 2), dtype=np.int64)
    m = np.zeros((2, 2), dtype=np.int64)

    def tally(basis, idx, first, second, wrong_if_first):
        # first/second: did outcome A / B fire for pulse idx
        if idx.size == 0:
            return
        both = first & second
        err = np.where(wrong_if_first, first & ~second, second & ~first)
        err = err | (both & (rng.random(idx.size) < 0.5))
        k = symbols.intensity_at(idx)
        for j in (Intensity.MU1, Intensity.MU2):
            sel = k == j
            n[basis, j] += int(sel.sum())
            m[basis, j] += int((err & sel).sum())

    # Z basis
    tz = clicks.for_detector(DET_Z).astype(float)
    i = np.floor((tz + gate_ps) / period).astype(np.int64)
    rel = tz - i * period
    early = np.abs(rel) <= gate_ps
    late = np.abs(rel - sep) <= gate_ps
    ok = (early | late) & (i >= start_pulse) & (i < stop)
    i, early, late = i[ok], early[ok], late[ok]
    pulses, inv = np.unique(i, return_inverse=True)
    e_hit = np.zeros(pulses.size, dtype=bool)
    l_hit = np.zeros(pulses.size, dtype=bool)
    e_hit[inv[early]] = True
    l_hit[inv[late]] = True
    st = symbols.state_at(pulses)
    zsel = st != State.XP
    # error when the click lands in the bin the state does not occupy
    tally(0, pulses[zsel], e_hit[zsel], l_hit[zsel], st[zsel] == State.Z1)

    # X basis: central slot of both interferometer ports
    hits = {}
    for det in (DET_XB, DET_XD):
        tx = clicks.for_detector(det).astype(float) - sep
        i = np.round(tx / period).astype(np.int64)
        ok = (np.abs(tx - i * period) <= gate_ps) & (i >= start_pulse) & (i < stop)
        hits[det] = np.unique(i[ok])
    pulses = np.union1d(hits[DET_XB], hits[DET_XD])
    xsel = symbols.state_at(pulses) == State.XP
    pulses = pulses[xsel]
    bright = np.isin(pulses, hits[DET_XB])
    dark = np.isin(pulses, hits[DET_XD])
    tally(1, pulses, bright, dark, np.zeros(pulses.size, dtype=bool))

    return TallyBlock(n, m, n_pulses / params.qubit_rate_hz)


# ---------------------------------------------------------------- analytic model


@dataclass(frozen=True)
class LeakSource:
    """Statistical description of a co-propagating mode for the rate model."""

    params: ProtocolParams
    fraction: float


def _classes(params: ProtocolParams):
    """(state, intensity index, probability) for every transmitter choice."""
    out = []
    for s, ps in ((State.Z0, params.p_Z / 2), (State.Z1, params.p_Z / 2), (State.XP, 1 - params.p_Z)):
        for k, pk in ((0, params.p_mu1), (1, params.p_mu2)):
            if ps * pk > 0:
                out.append((s, k, ps * pk))
    return out


def expected_tally(
    params: ProtocolParams,
    link_loss_db: float,
    receiver: ReceiverSpec,
    detector: DetectorSpec,
    n_pulses: float,
    leaks: Sequence[LeakSource] = (),
    quadrature: int = 24,
) -> tuple[np.ndarray, np.ndarray]:
    """Expected ``(n, m)`` of ``sift`` for ``n_pulses`` pulses, same model as
    ``detect_block``.

    Residual phase is Gaussian with the receiver's RMS (Gauss-Hermite
    quadrature); leaking modes are averaged over their own symbol statistics.
    Dead time is neglected (it matters only at click rates far above these).
    """
    transmission = 10.0 ** (-link_loss_db / 10.0)
    scale_z = transmission * receiver.split_Z * detector.efficiency
    scale_x = transmission * receiver.split_X * detector.efficiency
    noise = receiver.noise_cps(detector) * 2.0 * receiver.gate_ps * 1e-12

    nodes, weights = np.polynomial.hermite_e.hermegauss(quadrature)
    phases = nodes * receiver.residual_phase_rms_rad
    weights = weights / weights.sum()

    # joint distribution of leaked (early, late) light
    leak_e, leak_l, leak_w = np.zeros(1), np.zeros(1), np.ones(1)
    for src in leaks:
        e, l, w = [], [], []
        for s, k, p in _classes(src.params):
            pair = encode_many(np.array([s]), np.array([src.params.mus[k]]))
            e.append(src.fraction * pair[0][0])
            l.append(src.fraction * pair[1][0])
            w.append(p)
        leak_e = (leak_e[:, None] + np.array(e)[None, :]).ravel()
        leak_l = (leak_l[:, None] + np.array(l)[None, :]).ravel()
        leak_w = (leak_w[:, None] * np.array(w)[None, :]).ravel()

    n = np.zeros((2, 2))
    m = np.zeros((2, 2))
    for s, k, p in _classes(params):
        own_e, own_l = encode_many(np.array([s]), np.array([params.mus[k]]))
        early = own_e[0] + leak_e[:, None]
        late = own_l[0] + leak_l[:, None]
        lam = _slot_means(early, late, receiver, phases[None, :], scale_z, scale_x)
        w = leak_w[:, None] * weights[None, :]
        if s == State.XP:
            pb = -np.expm1(-(lam[(DET_XB, 1)] + noise[DET_XB]))
            pd = -np.expm1(-(lam[(DET_XD, 1)] + noise[DET_XD]))
            det = 1 - (1 - pb) * (1 - pd)
            err = pd * (1 - pb) + 0.5 * pb * pd
            n[1, k] += n_pulses * p * float(np.sum(w * det))
            m[1, k] += n_pulses * p * float(np.sum(w * err))
        else:
            pe = -np.expm1(-(lam[(DET_Z, 0)] + noise[DET_Z]))
            pl = -np.expm1(-(lam[(DET_Z, 1)] + noise[DET_Z]))
            det = 1 - (1 - pe) * (1 - pl)
            wrong, right = (pl, pe) if s == State.Z0 else (pe, pl)
            err = wrong * (1 - right) + 0.5 * pe * pl
            n[0, k] += n_pulses * p * float(np.sum(w * det))
            m[0, k] += n_pulses * p * float(np.sum(w * err))
    return n, m

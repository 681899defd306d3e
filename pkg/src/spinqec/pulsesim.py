"""Rotating-frame pulse simulation of three exchange-coupled spins.

Units: frequencies in Hz, times in seconds. Hamiltonians are H/h, so a
step of length ``dt`` evolves with ``exp(-2j*pi*H*dt)``.

Model (rotating-wave approximation, Ising exchange)::

    H = sum_i (f_i - frame_i) Sz_i + J12 Sz1 Sz2 + J23 Sz2 Sz3
        + sum_tones (rabi(t)/2) [cos(ph) sx_t + sin(ph) sy_t]
    ph = phase - 2*pi*(carrier - frame_t)*t

where ``t`` is measured from the start of the segment carrying the tone, so
each tone starts with its programmed phase in the qubit frame (as for an I/Q
sideband waveform). With Sz = diag(-1/2, +1/2) (|down> is spin -1/2). The Q2 transition is
shifted by s1*J12 + s3*J23, which is what makes the resonant iToffoli
conditional.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import erf

from .qcore import SPIN_Z, SX, SY, Operator, StateVector, _arr, embed

log = logging.getLogger(__name__)

SZ_OPS = [embed(SPIN_Z, q) for q in (1, 2, 3)]
SX_OPS = [embed(SX, q) for q in (1, 2, 3)]
SY_OPS = [embed(SY, q) for q in (1, 2, 3)]
ZZ12 = SZ_OPS[0] @ SZ_OPS[1]
ZZ23 = SZ_OPS[1] @ SZ_OPS[2]
SZ_DIAG = np.array([np.diag(s).real for s in SZ_OPS])
ZZ12_DIAG = np.diag(ZZ12).real
ZZ23_DIAG = np.diag(ZZ23).real

DEFAULT_DT = 0.1e-9
# drive reduction used for narrow-line spectroscopy: -12 dB in amplitude
SPECTROSCOPY_SCALE = 10 ** (-12 / 20)
LN9 = np.log(9.0)


@dataclass(frozen=True)
class DeviceParams:
    resonance_freqs: tuple = (19942.6e6, 20372.6e6, 20923.2e6)
    J12: float = 0.0
    J23: float = 0.0
    residual_J: float = 0.2e6
    T1: tuple = (22e-3, 22e-3, 22e-3)
    T2star: tuple = (1.8e-6, 1.8e-6, 1.8e-6)

    def __post_init__(self):
        if any(f <= 0 for f in self.resonance_freqs):
            raise ValueError("resonance frequencies must be positive")
        if min(self.J12, self.J23, self.residual_J) < 0:
            raise ValueError("exchange couplings must be non-negative")
        if any(t <= 0 for t in (*self.T1, *self.T2star)):
            raise ValueError("coherence times must be positive")

    def q2_resonance(self, s1: float, s3: float, J12: float | None = None,
                     J23: float | None = None) -> float:
        """Q2 transition frequency for ancilla spin numbers s1, s3 = +-1/2."""
        J12 = self.J12 if J12 is None else J12
        J23 = self.J23 if J23 is None else J23
        return self.resonance_freqs[1] + s1 * J12 + s3 * J23


@dataclass(frozen=True)
class Tone:
    carrier_freq: float
    rabi_freq: float
    target: int
    phase: float = 0.0
    envelope: str = "rectangular"
    sigma: float = 0.0

    def __post_init__(self):
        if self.envelope not in ("rectangular", "gaussian", "raised_cosine"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "gaussian" and self.sigma <= 0:
            raise ValueError("gaussian envelope needs sigma > 0")
        if self.target not in (1, 2, 3):
            raise ValueError("tone target must be 1, 2 or 3")

    def amplitude(self, t: np.ndarray, duration: float) -> np.ndarray:
        """Rabi frequency at segment-local times ``t``."""
        t = np.asarray(t, dtype=float)
        if self.envelope == "rectangular":
            return np.full(t.shape, self.rabi_freq)
        if self.envelope == "gaussian":
            # truncated at +-2 sigma around the segment centre
            x = (t - duration / 2) / self.sigma
            return self.rabi_freq * np.exp(-x**2 / 2) * (np.abs(x) <= 2)
        return self.rabi_freq * 0.5 * (1 - np.cos(2 * np.pi * t / duration))


@dataclass(frozen=True)
class Segment:
    duration: float
    J12: float = 0.0
    J23: float = 0.0
    tones: tuple = ()

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")
        targets = [t.target for t in self.tones]
        if len(set(targets)) != len(targets):
            raise ValueError("at most one tone per qubit per segment")


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered segments. ``exchange_rise`` > 0 low-pass filters J with that 10-90% rise time."""

    segments: tuple
    exchange_rise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        if self.exchange_rise < 0:
            raise ValueError("exchange_rise must be non-negative")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)


@dataclass(frozen=True)
class ItoffoliCalibration:
    t_tot: float
    delta_t: float
    t_mw: float
    conditional_phases: tuple = (np.pi, 0.0, 0.0, 0.0)
    virtual_phase: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        if self.t_tot < self.t_mw - 1e-15:
            raise ValueError("t_tot shorter than the microwave pulse")
        if abs(self.delta_t) > self.t_tot - self.t_mw + 1e-15:
            raise ValueError("|delta_t| exceeds the idle exchange time")

    @property
    def t_dc1(self) -> float:
        return (self.t_tot - self.t_mw + self.delta_t) / 2

    @property
    def t_dc2(self) -> float:
        return (self.t_tot - self.t_mw - self.delta_t) / 2


def _frames(dev: DeviceParams, frame_freqs) -> np.ndarray:
    return np.asarray(dev.resonance_freqs if frame_freqs is None else frame_freqs, dtype=float)


def _diag_part(dev: DeviceParams, frames: np.ndarray, J12, J23) -> np.ndarray:
    det = np.asarray(dev.resonance_freqs) - frames
    J12 = np.asarray(J12, dtype=float)[..., None]
    J23 = np.asarray(J23, dtype=float)[..., None]
    return det @ SZ_DIAG + J12 * ZZ12_DIAG + J23 * ZZ23_DIAG


def hamiltonian(dev: DeviceParams, segment: Segment, t: float, frame_freqs=None) -> Operator:
    """H/h at segment-local time ``t``."""
    if not 0.0 <= t <= segment.duration:
        raise ValueError(f"t = {t} outside segment of length {segment.duration}")
    frames = _frames(dev, frame_freqs)
    h = np.diag(_diag_part(dev, frames, segment.J12, segment.J23)).astype(complex)
    for tone in segment.tones:
        q = tone.target - 1
        amp = float(tone.amplitude(np.array([t]), segment.duration)[0])
        ph = tone.phase - 2 * np.pi * (tone.carrier_freq - frames[q]) * t
        h = h + 0.5 * amp * (np.cos(ph) * SX_OPS[q] + np.sin(ph) * SY_OPS[q])
    return Operator(h)


def _batched_expm(h: np.ndarray, dt: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    ph = np.exp(-2j * np.pi * w * dt)
    return np.einsum("...ij,...j,...kj->...ik", v, ph, v.conj())


def _segment_steps(seg: Segment, dt: float) -> tuple[int, float]:
    n = int(np.ceil(seg.duration / dt - 1e-9))
    return n, seg.duration / n


def _exchange_profile(sched: PulseSchedule, seg_index: int, t_local: np.ndarray,
                      j_start: tuple) -> tuple:
    seg = sched.segments[seg_index]
    if sched.exchange_rise <= 0:
        return np.full(t_local.shape, seg.J12), np.full(t_local.shape, seg.J23)
    tau = sched.exchange_rise / LN9
    decay = np.exp(-t_local / tau)
    j12 = seg.J12 + (j_start[0] - seg.J12) * decay
    j23 = seg.J23 + (j_start[1] - seg.J23) * decay
    return j12, j23


def segment_unitaries(dev: DeviceParams, sched: PulseSchedule, dt: float = DEFAULT_DT,
                      frame_freqs=None, check: bool = True) -> list:
    """Propagator of each segment (piecewise-constant stepping, midpoint sampling).

    Segments without tones or exchange ramps have a constant diagonal
    Hamiltonian and are exponentiated in one step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    shortest = min(s.duration for s in sched.segments)
    if check and dt > shortest / 10 * (1 + 1e-9):
        raise ValueError(f"dt = {dt} coarser than shortest segment / 10 ({shortest / 10})")
    frames = _frames(dev, frame_freqs)
    out = []
    j_state = (0.0, 0.0)
    for k, seg in enumerate(sched.segments):
        n, step = _segment_steps(seg, dt)
        tmid = (np.arange(n) + 0.5) * step
        j12, j23 = _exchange_profile(sched, k, tmid, j_state)
        if sched.exchange_rise > 0:
            end12, end23 = _exchange_profile(sched, k, np.array([seg.duration]), j_state)
            j_state = (float(end12[0]), float(end23[0]))
        else:
            j_state = (seg.J12, seg.J23)
        diag = _diag_part(dev, frames, j12, j23)
        if not seg.tones and sched.exchange_rise <= 0:
            out.append(np.diag(np.exp(-2j * np.pi * diag[0] * seg.duration)))
            continue
        h = np.zeros((n, 8, 8), dtype=complex)
        idx = np.arange(8)
        h[:, idx, idx] = diag
        for tone in seg.tones:
            q = tone.target - 1
            amp = tone.amplitude(tmid, seg.duration)
            ph = tone.phase - 2 * np.pi * (tone.carrier_freq - frames[q]) * tmid
            h += 0.5 * (amp * np.cos(ph))[:, None, None] * SX_OPS[q]
            h += 0.5 * (amp * np.sin(ph))[:, None, None] * SY_OPS[q]
        steps = _batched_expm(h, step)
        u = np.eye(8, dtype=complex)
        for s in steps:
            u = s @ u
        out.append(u)
    return out


def schedule_unitary(dev: DeviceParams, sched: PulseSchedule, dt: float = DEFAULT_DT,
                     frame_freqs=None, check: bool = True) -> np.ndarray:
    u = np.eye(8, dtype=complex)
    for s in segment_unitaries(dev, sched, dt, frame_freqs, check):
        u = s @ u
    return u


def evolve(dev: DeviceParams, sched: PulseSchedule, psi0, dt: float = DEFAULT_DT,
           frame_freqs=None) -> StateVector:
    psi = schedule_unitary(dev, sched, dt, frame_freqs) @ _arr(psi0)
    return StateVector(psi / np.linalg.norm(psi))


# --- spectroscopy -----------------------------------------------------------

CONTROL_STATES = ("dd", "du", "ud", "uu")


def _control_index(control_state: str, q2_up: bool = False) -> int:
    b1 = control_state[0] == "u"
    b3 = control_state[1] == "u"
    return (b1 << 2) | (q2_up << 1) | b3


def gaussian_pi_sigma(rabi_freq: float) -> float:
    """Sigma of a +-2 sigma truncated Gaussian whose area is a pi rotation."""
    area_per_sigma = np.sqrt(2 * np.pi) * erf(np.sqrt(2))
    return 0.5 / (rabi_freq * area_per_sigma)


def spectroscopy_scan(dev: DeviceParams, control_state: str, detunings: Sequence[float],
                      rabi_freq: float = 4e6 * SPECTROSCOPY_SCALE, sigma: float | None = None,
                      dt: float = 1e-9) -> list:
    """Q2 spin-up probability vs drive detuning from the |dd> resonance.

    The ancillas are held in the basis state ``control_state`` (``'dd'``,
    ``'du'``, ``'ud'`` or ``'uu'`` for Q1 Q3) and Q2 gets a truncated Gaussian
    pulse. ``sigma`` defaults to a pi pulse at ``rabi_freq``.
    """
    if control_state not in CONTROL_STATES:
        raise ValueError(f"control state must be one of {CONTROL_STATES}")
    detunings = np.asarray(detunings, dtype=float)
    if detunings.size == 0:
        raise ValueError("empty detuning grid")
    sigma = gaussian_pi_sigma(rabi_freq) if sigma is None else sigma
    f_ref = dev.q2_resonance(-0.5, -0.5)
    psi0 = np.zeros(8, dtype=complex)
    psi0[_control_index(control_state)] = 1
    up = _control_index(control_state, True)
    out = []
    for d in detunings:
        tone = Tone(f_ref + d, rabi_freq, 2, envelope="gaussian", sigma=sigma)
        seg = Segment(4 * sigma, dev.J12, dev.J23, (tone,))
        psi = schedule_unitary(dev, PulseSchedule((seg,)), dt) @ psi0
        out.append((float(d), float(abs(psi[up]) ** 2)))
    return out


# --- iToffoli ---------------------------------------------------------------

def itoffoli_drive(J: float) -> tuple[float, float]:
    """(rabi frequency, pi-pulse duration) synchronised so the |ud>/|du> branches
    complete one full off-resonant cycle."""
    rabi = J / np.sqrt(3)
    return rabi, 1 / (2 * rabi)


def theoretical_t_tot(J: float) -> float:
    """Exchange window duration (4 + sqrt3 - sqrt13)/J with J in Hz (473 ns at 4.5 MHz)."""
    return (4 + np.sqrt(3) - np.sqrt(13)) / J


def itoffoli_schedule(dev: DeviceParams, J: float, cal: ItoffoliCalibration,
                      drive_scale: float = 1.0, exchange_rise: float = 0.0) -> PulseSchedule:
    if J <= 0:
        raise ValueError("J must be positive")
    rabi, _ = itoffoli_drive(J)
    dev_j = replace(dev, J12=J, J23=J)
    tone = Tone(dev_j.q2_resonance(-0.5, -0.5), rabi * drive_scale, 2)
    segs = []
    if cal.t_dc1 > 1e-13:
        segs.append(Segment(cal.t_dc1, J, J))
    segs.append(Segment(cal.t_mw, J, J, (tone,)))
    if cal.t_dc2 > 1e-13:
        segs.append(Segment(cal.t_dc2, J, J))
    return PulseSchedule(tuple(segs), exchange_rise)


def _virtual_z2(phase: float) -> np.ndarray:
    return embed(np.diag([np.exp(-0.5j * phase), np.exp(0.5j * phase)]), 2)


def itoffoli_pulse(dev: DeviceParams, J: float, cal: ItoffoliCalibration,
                   dt: float = DEFAULT_DT, drive_scale: float = 1.0,
                   exchange_rise: float = 0.0) -> Operator:
    """8x8 propagator of the three-stage iToffoli schedule, followed by the
    calibration's virtual Z on Q2. Frames sit at the idle qubit resonances."""
    if J <= 0:
        raise ValueError("J must be positive")
    sched = itoffoli_schedule(dev, J, cal, drive_scale, exchange_rise)
    # idle exchange segments are exact; only the driven stage is stepped
    dt = min(dt, cal.t_mw / 10)
    u = _virtual_z2(cal.virtual_phase) @ schedule_unitary(dev, sched, dt, check=False)
    return Operator(u, unitary_flag=True)


ANCILLA_ORDER = ("dd", "ud", "du", "uu")


def q2_block(u: np.ndarray, control_state: str) -> np.ndarray:
    """2x2 block of ``u`` acting on Q2 for ancillas fixed at ``control_state``."""
    idx = [_control_index(control_state, False), _control_index(control_state, True)]
    return np.asarray(u)[np.ix_(idx, idx)]


def ramsey_phase(block: np.ndarray) -> float:
    """Phase picked up by Q2 between two X/2 pulses, in [-pi/2, 3pi/2).

    The identity gives 0 and i*sx gives pi.
    """
    psi_in = np.array([1, -1j]) / np.sqrt(2)
    psi = block @ psi_in
    phi = np.angle(psi[1] * np.conj(psi[0])) - np.angle(psi_in[1] * np.conj(psi_in[0]))
    return float((phi + np.pi / 2) % (2 * np.pi) - np.pi / 2)


def conditional_phases(u: np.ndarray) -> tuple:
    """Q2 Ramsey phases for ancillas |dd>, |ud>, |du>, |uu> (Q1 Q3)."""
    return tuple(ramsey_phase(q2_block(u, a)) for a in ANCILLA_ORDER)


TARGET_PHASES = (np.pi, 0.0, 0.0, 0.0)


def phase_error(phases: Sequence[float], target: Sequence[float] = TARGET_PHASES) -> np.ndarray:
    d = np.asarray(phases) - np.asarray(target)
    return (d + np.pi) % (2 * np.pi) - np.pi


def population_transfer_table(u: np.ndarray) -> np.ndarray:
    """Classical action: entry [i, j] is P(output j | input basis state i)."""
    return (np.abs(np.asarray(u)) ** 2).T


def population_transfer_fidelity(table: np.ndarray, ideal: np.ndarray | None = None) -> float:
    """Tr(U_expt U_ideal)/8 on classical truth tables (rows are inputs)."""
    if ideal is None:
        from .circuits import itoffoli_matrix
        ideal = population_transfer_table(itoffoli_matrix())
    return float(np.trace(np.asarray(table) @ np.asarray(ideal).T) / table.shape[0])


def _relative_phases(dev, J, t_tot, delta_t, t_mw, dt):
    cal = ItoffoliCalibration(t_tot, delta_t, t_mw, virtual_phase=0.0)
    u = itoffoli_pulse(dev, J, cal, dt).elements
    ph = np.array(conditional_phases(u))
    # the virtual Z cancels the common offset, leaving differences to |uu>
    virt = -float(np.angle(np.mean(np.exp(1j * phase_error(ph)))))
    return phase_error(ph + virt), virt


def calibrate_itoffoli(dev: DeviceParams, J: float, dt: float = DEFAULT_DT,
                       t_tot_guess: float | None = None, tol: float = 0.01 * np.pi,
                       max_iter: int = 60) -> ItoffoliCalibration:
    """Tune exchange window, microwave timing and the Q2 virtual phase so the
    conditional phases read (pi, 0, 0, 0).

    Coordinate search on (t_tot, delta_t) seeded by :func:`theoretical_t_tot`,
    followed by damped Gauss-Newton on the two timing parameters. Raises
    ``RuntimeError`` with the residual if the phase error stays above ``tol``.
    """
    if J <= 0:
        raise ValueError("J must be positive")
    _, t_mw = itoffoli_drive(J)
    t0 = theoretical_t_tot(J) if t_tot_guess is None else t_tot_guess
    period = 1 / J

    def resid(x):
        t_tot, dlt = x
        dlt = float(np.clip(dlt, -(t_tot - t_mw), t_tot - t_mw))
        err, _ = _relative_phases(dev, J, t_tot, dlt, t_mw, dt)
        return err

    # coarse scan: t_tot within one exchange period of the seed, delta_t over its range
    best, best_cost = None, np.inf
    for t_tot in t0 + period * np.linspace(-0.5, 0.5, 21):
        if t_tot <= t_mw:
            continue
        span = t_tot - t_mw
        for dlt in np.linspace(-span, span, 21):
            c = float(np.sum(resid((t_tot, dlt)) ** 2))
            if c < best_cost:
                best, best_cost = np.array([t_tot, dlt]), c
    x = best
    lam = 1e-3
    r = resid(x)
    scale = np.array([period, period])
    for _ in range(max_iter):
        if np.max(np.abs(r)) < 1e-6:
            break
        jac = np.empty((4, 2))
        for k in range(2):
            h = np.zeros(2)
            h[k] = 1e-4 * scale[k]
            jac[:, k] = (resid(x + h) - resid(x - h)) / (2 * h[k])
        jac_s = jac * scale
        a = jac_s.T @ jac_s
        g = jac_s.T @ r
        step = -np.linalg.solve(a + lam * np.diag(np.diag(a) + 1e-12), g) * scale
        trial = x + step
        trial[0] = max(trial[0], t_mw)
        r_new = resid(trial)
        if np.sum(r_new**2) < np.sum(r**2):
            x, r = trial, r_new
            lam = max(lam / 10, 1e-9)
        else:
            lam *= 10
            if lam > 1e6:
                break
    t_tot, dlt = x
    dlt = float(np.clip(dlt, -(t_tot - t_mw), t_tot - t_mw))
    err, virt = _relative_phases(dev, J, t_tot, dlt, t_mw, dt)
    cal = ItoffoliCalibration(float(t_tot), dlt, t_mw, virtual_phase=virt)
    phases = conditional_phases(itoffoli_pulse(dev, J, cal, dt).elements)
    residual = float(np.max(np.abs(phase_error(phases))))
    cal = replace(cal, conditional_phases=tuple(phases), residual=residual)
    if residual > tol:
        raise RuntimeError(f"iToffoli calibration did not converge: max phase error "
                           f"{residual / np.pi:.3f} pi at t_tot = {t_tot * 1e9:.1f} ns")
    log.info("iToffoli calibrated: t_tot=%.1f ns delta_t=%.1f ns residual=%.2e",
             t_tot * 1e9, dlt * 1e9, residual)
    return cal


# --- virtual gates ----------------------------------------------------------

VIRTUAL_GATE_MATRIX = np.array([
    [1.00, 0.30, 0.54, 0.14, 0.17],
    [0.00, 1.00, 0.00, 0.00, 0.00],
    [0.61, 0.35, 1.00, 0.25, 0.31],
    [0.00, 0.00, 0.00, 1.00, 0.00],
    [0.15, 0.10, 0.46, 0.31, 1.00],
])
GATE_ORDER = ("P1", "B2", "P2", "B3", "P3")


def virtual_gate_transform(deltas: Sequence[float], matrix: np.ndarray | None = None) -> np.ndarray:
    """Map physical steps (dP1, dB2, dP2, dB3, dP3) to virtual gate values."""
    m = VIRTUAL_GATE_MATRIX if matrix is None else np.asarray(matrix, dtype=float)
    d = np.asarray(deltas, dtype=float)
    if m.shape != (5, 5) or d.shape != (5,):
        raise ValueError("expected a 5x5 matrix and 5 gate steps")
    return m @ d


# --- schedule text format -----------------------------------------------------

def dumps_schedule(sched: PulseSchedule) -> str:
    """Key-value text with one ``[segment]`` block per segment and ``[tone]`` blocks inside."""
    lines = [f"exchange_rise = {sched.exchange_rise!r}"]
    for seg in sched.segments:
        lines += ["", "[segment]", f"duration = {seg.duration!r}",
                  f"J12 = {seg.J12!r}", f"J23 = {seg.J23!r}"]
        for t in seg.tones:
            lines += ["[tone]", f"target = {t.target}", f"carrier_freq = {t.carrier_freq!r}",
                      f"rabi_freq = {t.rabi_freq!r}", f"phase = {t.phase!r}",
                      f"envelope = {t.envelope}", f"sigma = {t.sigma!r}"]
    return "\n".join(lines) + "\n"


_SEG_KEYS = {"duration", "J12", "J23"}
_TONE_KEYS = {"target", "carrier_freq", "rabi_freq", "phase", "envelope", "sigma"}


def loads_schedule(text: str) -> PulseSchedule:
    rise = 0.0
    segs: list = []
    block = None
    cur: dict = {}

    def flush():
        nonlocal cur
        if block == "segment":
            segs.append({"seg": cur, "tones": []})
        elif block == "tone":
            if not segs:
                raise ValueError("[tone] before any [segment]")
            segs[-1]["tones"].append(cur)
        cur = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line in ("[segment]", "[tone]"):
            flush()
            block = line[1:-1]
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        allowed = {None: {"exchange_rise"}, "segment": _SEG_KEYS, "tone": _TONE_KEYS}[block]
        if key not in allowed:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if block is None:
            rise = float(val)
        else:
            cur[key] = val if key == "envelope" else (int(val) if key == "target" else float(val))
    flush()
    segments = tuple(
        Segment(s["seg"]["duration"], s["seg"].get("J12", 0.0), s["seg"].get("J23", 0.0),
                tuple(Tone(**t) for t in s["tones"]))
        for s in segs
    )
    return PulseSchedule(segments, rise)

"""Three-qubit phase-flip code with the data on Q2 and ancillas Q1, Q3.

Encoder, in time order::

    X2, Y1(-pi/2), Y3(-pi/2), CZ12, CZ23, Y2(-pi/2)

It maps |d>|psi>|d> to a|+++> + b|--->, where psi = b|d> + a|u> (the X on the
data swaps the roles of the two coefficients). Conjugating by the encoder
turns Z1 -> X1, Z2 -> X1 X2 X3 and Z3 -> X3, so after decoding a phase error
on Q2 is a bit flip of the data together with both ancillas. The correction
stage flips both ancillas and applies the iToffoli, which acts as i*X on the
data only when both ancillas read |dd>.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import tomo
from .circuits import Circuit, circuit_unitary, cz, execute, itoffoli, rx, ry
from .noise import (NoiseModel, QubitNoise, mean_flip_probability, quasistatic_sigma,
                    readout_confusion, sample_shots)
from .qcore import DOWN, UP, DensityMatrix, partial_trace, state_fidelity

log = logging.getLogger(__name__)

GATE_LEVELS = ("ideal", "pulse")
# ancilla outcomes in (Q1, Q3) order, Q1 the more significant bit
ANCILLA_LABELS = ("dd", "du", "ud", "uu")
SYNDROME_TABLE = {"none": "uu", "Q1": "du", "Q2": "dd", "Q3": "ud"}
PULSE_J = 4.5e6


def encode_circuit() -> Circuit:
    ops = (rx(2, np.pi), ry(1, -np.pi / 2), ry(3, -np.pi / 2), cz(1, 2), cz(2, 3),
           ry(2, -np.pi / 2))
    return Circuit(3, ops)


def decode_circuit() -> Circuit:
    return encode_circuit().inverse()


def correction_stage(gate_level: str = "ideal") -> Circuit:
    """pi pulses on both ancillas, then the iToffoli.

    The circuit always holds the ideal iToffoli op; for ``gate_level="pulse"``
    swap in :func:`pulse_itoffoli_unitary` through ``overrides``.
    """
    if gate_level not in GATE_LEVELS:
        raise ValueError(f"unknown gate level {gate_level!r}")
    return Circuit(3, (rx(1, np.pi), rx(3, np.pi), itoffoli()))


def qec_circuit(apply_correction: bool = True, gate_level: str = "ideal") -> Circuit:
    """Encode, error slot, decode and optionally correct."""
    enc = encode_circuit()
    c = enc + decode_circuit()
    if apply_correction:
        c = c + correction_stage(gate_level)
    return Circuit(3, c.ops, error_slot=len(enc.ops))


def pulse_calibration(J: float = PULSE_J, dt: float = 0.1e-9):
    return _calibration(float(J), float(dt))


@lru_cache(maxsize=4)
def _calibration(J: float, dt: float):
    from .pulsesim import DeviceParams, calibrate_itoffoli
    return calibrate_itoffoli(DeviceParams(), J, dt)


def pulse_itoffoli_unitary(J: float = PULSE_J, dt: float = 0.1e-9) -> np.ndarray:
    """Calibrated pulse-level iToffoli propagator (cached; calibration takes seconds)."""
    return _pulse_unitary(float(J), float(dt))


@lru_cache(maxsize=4)
def _pulse_unitary(J: float, dt: float) -> np.ndarray:
    from .pulsesim import DeviceParams, itoffoli_pulse
    u = itoffoli_pulse(DeviceParams(), J, pulse_calibration(J, dt), dt).elements
    u.setflags(write=False)
    return u


def _overrides(gate_level: str):
    if gate_level == "pulse":
        return {"ITOFFOLI_IDEAL": pulse_itoffoli_unitary()}
    return None


def register_state(psi) -> np.ndarray:
    """|d> (x) psi (x) |d> as a density matrix; ``psi`` is a vector or 2x2 density matrix."""
    a = np.asarray(getattr(psi, "amplitudes", getattr(psi, "elements", psi)), dtype=complex)
    rho = np.outer(a, a.conj()) if a.ndim == 1 else a
    d = np.outer(DOWN, DOWN)
    return np.kron(np.kron(d, rho), d)


def ancilla_probabilities(rho) -> np.ndarray:
    """P(Q1 Q3) for labels :data:`ANCILLA_LABELS`."""
    return partial_trace(rho, [1, 3]).probabilities()


def data_state(rho) -> DensityMatrix:
    return partial_trace(rho, [2])


@dataclass(frozen=True)
class QecRun:
    """One QEC execution.

    ``input_state`` None means process tomography over the inputs
    (I, X/2, Y/2, X) applied to |d>. ``shots`` None gives exact probabilities;
    otherwise every tomography setting is sampled ``shots`` times with the
    readout fidelities of ``noise`` and the data passes through MLE.
    """

    noise: NoiseModel = field(default_factory=NoiseModel)
    input_state: object = None
    gate_level: str = "ideal"
    apply_correction: bool = True
    shots: int | None = None
    seed: int = 0
    estimator: str = "mle"

    def __post_init__(self):
        if self.gate_level not in GATE_LEVELS:
            raise ValueError(f"unknown gate level {self.gate_level!r}")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive")
        if self.estimator not in ("mle", "linear"):
            raise ValueError("estimator must be 'mle' or 'linear'")


@dataclass
class QecResult:
    fidelity: float
    ancilla_probabilities: np.ndarray
    final_states: list
    chi: np.ndarray | None = None


def _sampled(p_true: np.ndarray, shots: int, readout, rng) -> np.ndarray:
    """Sampled, readout-corrected probabilities for one measured register."""
    conf = readout_confusion(readout)
    rec = sample_shots(conf @ p_true, shots, rng)
    return tomo.readout_invert(rec.frequencies(), readout)


def run_qec(r: QecRun) -> QecResult:
    circ = qec_circuit(r.apply_correction, r.gate_level)
    ov = _overrides(r.gate_level)
    rng = np.random.default_rng(r.seed)
    ro = r.noise.readout
    if r.input_state is not None:
        rho = execute(circ, register_state(r.input_state), r.noise, ov)
        anc = ancilla_probabilities(rho)
        psi = np.asarray(getattr(r.input_state, "amplitudes", r.input_state), dtype=complex)
        if r.shots is not None:
            anc = _sampled(anc, r.shots, [ro[0], ro[2]], rng)
        return QecResult(state_fidelity(data_state(rho), psi), anc, [rho])

    finals, outs, ancs = [], [], []
    for rho_in in tomo.process_inputs():
        rho = execute(circ, register_state(rho_in), r.noise, ov)
        finals.append(rho)
        outs.append(data_state(rho).elements)
        ancs.append(ancilla_probabilities(rho))
    p_down = tomo.complete_x_column(tomo.channel_probabilities(outs))
    anc = np.mean(ancs, axis=0)
    if r.shots is not None:
        p_down = np.array([[_sampled(np.array([p, 1 - p]), r.shots, [ro[1]], rng)[0]
                            for p in row] for row in p_down])
        p_down = tomo.complete_x_column(p_down)
        anc = _sampled(anc, r.shots, [ro[0], ro[2]], rng)
    if r.estimator == "linear" and r.shots is None:
        chi = tomo.chi_from_outputs(outs)
    else:
        chi = tomo.process_mle(p_down).chi
    return QecResult(tomo.process_fidelity(chi), anc, finals, chi)


def single_error_noise(qubit: int, theta: float = 0.0, p_flip: float = 0.0) -> NoiseModel:
    """Error on one qubit only (1-based), at the error slot."""
    qs = [QubitNoise(), QubitNoise(), QubitNoise()]
    qs[qubit - 1] = QubitNoise(p_flip, theta)
    return NoiseModel(qubits=tuple(qs))


def analytic_corrected_fidelity(p) -> np.ndarray | float:
    p = np.asarray(p, dtype=float)
    if ((p < 0) | (p > 1)).any():
        raise ValueError("p outside [0, 1]")
    out = 1 - 3 * p**2 + 2 * p**3
    return float(out) if out.ndim == 0 else out


def analytic_uncorrected_fidelity(p) -> np.ndarray | float:
    p = np.asarray(p, dtype=float)
    out = 1 - p
    return float(out) if out.ndim == 0 else out


def syndrome_of(error: str) -> str:
    return SYNDROME_TABLE[error]


# --- dephasing ----------------------------------------------------------------

DEPHASING_MODES = ("corrected", "uncorrected", "physical")


def _mode_unitaries(mode: str, gate_level: str = "ideal"):
    enc = circuit_unitary(encode_circuit())
    post = circuit_unitary(qec_circuit(mode == "corrected", gate_level), _overrides(gate_level))
    # everything after the slot: strip the encoder prefix
    return enc, post @ enc.conj().T


def _per_shot_fidelity(theta: np.ndarray, psi: np.ndarray, mode: str,
                       gate_level: str = "ideal") -> np.ndarray:
    """Data fidelity for coherent Z phases ``theta`` (shape (..., 3))."""
    theta = np.asarray(theta, dtype=float)
    if mode == "physical":
        # bare Q2 with no encoding
        amp = psi[0] * psi[0].conj() + psi[1] * psi[1].conj() * np.exp(1j * theta[..., 1])
        return np.abs(amp) ** 2
    enc, post = _mode_unitaries(mode, gate_level)
    start = enc @ np.kron(np.kron(DOWN, psi), DOWN)
    bits = np.array([[(i >> (2 - q)) & 1 for q in range(3)] for i in range(8)])
    phase = np.exp(1j * theta @ bits.T)
    final = (phase * start) @ post.T
    amp = np.einsum("...abc,b->...ac", final.reshape(*final.shape[:-1], 2, 2, 2), psi.conj())
    return np.sum(np.abs(amp) ** 2, axis=(-2, -1))


def _t2_tuple(T2star) -> tuple:
    t = np.broadcast_to(np.asarray(T2star, dtype=float), (3,))
    if (t <= 0).any():
        raise ValueError("T2star must be positive")
    return tuple(t)


@dataclass
class DephasingResult:
    t_w: np.ndarray
    fidelity: np.ndarray
    stderr: np.ndarray
    mode: str
    p_bar: np.ndarray


def dephasing_experiment(t_w, T2star=1.8e-6, shots: int = 10_000, mode: str = "corrected",
                         input_state=None, seed: int = 0, gate_level: str = "ideal",
                         recalibrate_every: int | None = None) -> DephasingResult:
    """Shot-averaged data fidelity after idling ``t_w`` under quasi-static noise.

    Every shot draws one detuning per qubit and the same draws are reused at
    every ``t_w`` (common random numbers). ``recalibrate_every`` splits the
    shots into segments whose mean detuning is re-zeroed, emulating
    interleaved frequency calibrations. The default input is |d>.
    """
    if mode not in DEPHASING_MODES:
        raise ValueError(f"mode must be one of {DEPHASING_MODES}")
    t_w = np.atleast_1d(np.asarray(t_w, dtype=float))
    if (t_w < 0).any():
        raise ValueError("t_w must be non-negative")
    t2 = _t2_tuple(T2star)
    psi = np.asarray(getattr(input_state, "amplitudes", DOWN if input_state is None else input_state),
                     dtype=complex)
    if mode == "physical" and input_state is None:
        psi = (DOWN + UP) / np.sqrt(2)
    rng = np.random.default_rng(seed)
    sig = np.array([quasistatic_sigma(t) for t in t2])
    df = rng.normal(size=(shots, 3)) * sig
    if recalibrate_every:
        for start in range(0, shots, recalibrate_every):
            seg = df[start:start + recalibrate_every]
            seg -= seg.mean(axis=0)
    theta = 2 * np.pi * df[None, :, :] * t_w[:, None, None]
    f = _per_shot_fidelity(theta, psi, mode, gate_level)
    mean = f.mean(axis=1)
    err = f.std(axis=1, ddof=1) / np.sqrt(shots) if shots > 1 else np.zeros_like(mean)
    p_bar = np.array([mean_flip_probability(t, np.mean(t2)) for t in t_w])
    return DephasingResult(t_w, mean, err, mode, p_bar)


def dephasing_quadrature(t_w, T2star=1.8e-6, mode: str = "corrected", input_state=None,
                         n_nodes: int = 40) -> np.ndarray:
    """Exact shot average by Gauss-Hermite quadrature over the three detunings."""
    t_w = np.atleast_1d(np.asarray(t_w, dtype=float))
    t2 = _t2_tuple(T2star)
    psi = np.asarray(getattr(input_state, "amplitudes", DOWN if input_state is None else input_state),
                     dtype=complex)
    if mode == "physical" and input_state is None:
        psi = (DOWN + UP) / np.sqrt(2)
    x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / w.sum()
    grid = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    wt = np.prod(np.stack(np.meshgrid(w, w, w, indexing="ij"), -1).reshape(-1, 3), axis=1)
    sig = np.array([quasistatic_sigma(t) for t in t2])
    out = []
    for t in t_w:
        theta = 2 * np.pi * grid * sig * t
        out.append(float(wt @ _per_shot_fidelity(theta, psi, mode)))
    return np.array(out)


def analytic_dephasing_fidelity(t_w, T2star=1.8e-6, mode: str = "corrected") -> np.ndarray:
    p = mean_flip_probability(np.asarray(t_w, dtype=float), T2star)
    if mode == "corrected":
        return analytic_corrected_fidelity(p)
    return analytic_uncorrected_fidelity(p)


# --- bit-flip variant ---------------------------------------------------------

def bitflip_circuit(apply_correction: bool = True) -> Circuit:
    """Phase-flip code wrapped in Y(pi/2) basis changes, so X errors in the slot
    act like Z errors of the inner code."""
    enc = encode_circuit()
    to_x = Circuit(3, tuple(ry(q, np.pi / 2) for q in (1, 2, 3)))
    tail = to_x.inverse() + decode_circuit()
    if apply_correction:
        tail = tail + correction_stage()
    full = enc + to_x + tail
    return Circuit(3, full.ops, error_slot=len(enc.ops) + 3)



def first_order_coefficient(res: DephasingResult, degree: int = 3) -> tuple:
    """Coefficient of p_bar in a weighted polynomial fit of F(p_bar), with its stderr.

    Points are weighted by their inverse sampling error (floored at 1e-9 so the
    noiseless t_w = 0 point does not dominate numerically).
    """
    w = 1 / np.maximum(res.stderr, 1e-9)
    c, cov = np.polyfit(res.p_bar, res.fidelity, degree, w=w, cov="unscaled")
    return float(c[-2]), float(np.sqrt(cov[-2, -2]))

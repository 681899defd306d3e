"""Error channels and measurement imperfections.

Everything here is built per qubit and lifted to the register by the caller.
Samplers take an explicit ``numpy.random.Generator`` so results are
reproducible from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .qcore import I2, SZ, KrausChannel, Operator

PLACEMENTS = ("after_encode", "per_gate", "idle_window")


def phase_flip_channel(p: float) -> KrausChannel:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability {p} outside [0, 1]")
    return KrausChannel((Operator(np.sqrt(1 - p) * I2), Operator(np.sqrt(p) * SZ)))


def coherent_z(theta: float) -> Operator:
    """Phase rotation diag(1, e^{i theta}); equivalent flip probability sin^2(theta/2)."""
    return Operator(np.diag([1.0, np.exp(1j * theta)]), unitary_flag=True)


def flip_probability(theta: float) -> float:
    return float(np.sin(theta / 2) ** 2)


def amplitude_damping(T1: float, t: float) -> KrausChannel:
    if T1 <= 0 or t < 0:
        raise ValueError("T1 must be positive and t non-negative")
    gamma = 1.0 - np.exp(-t / T1)
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel((Operator(k0), Operator(k1)))


def quasistatic_sigma(T2star: float) -> float:
    """Std of the detuning (Hz) that gives Ramsey coherence exp(-(t/T2*)^2)."""
    if T2star <= 0:
        raise ValueError("T2star must be positive")
    return 1.0 / (np.sqrt(2) * np.pi * T2star)


def sample_quasistatic_detunings(T2star: Sequence[float], rng: np.random.Generator,
                                 size: int | None = None) -> np.ndarray:
    """Per-qubit detunings in Hz, one draw per shot.

    Returns shape ``(len(T2star),)`` or ``(size, len(T2star))`` when ``size`` is given.
    """
    sig = np.array([quasistatic_sigma(t) for t in T2star])
    shape = sig.shape if size is None else (size, sig.size)
    return rng.normal(size=shape) * sig


def mean_flip_probability(t_w: float, T2star: float) -> float:
    """Shot-averaged flip probability after idling ``t_w`` under quasi-static noise."""
    return 0.5 * (1.0 - np.exp(-(t_w / T2star) ** 2))


def readout_matrix(f_down: float, f_up: float) -> np.ndarray:
    for f in (f_down, f_up):
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"readout fidelity {f} outside [0, 1]")
    return np.array([[f_down, 1 - f_up], [1 - f_down, f_up]])


def readout_confusion(fidelities: Sequence[tuple[float, float]]) -> np.ndarray:
    """Column-stochastic confusion matrix; column = true state, row = outcome."""
    return reduce(np.kron, [readout_matrix(fd, fu) for fd, fu in fidelities])


@dataclass(frozen=True)
class ShotRecord:
    counts: tuple
    total: int

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if any(x < 0 for x in c):
            raise ValueError("negative count")
        if sum(c) != self.total:
            raise ValueError(f"counts sum {sum(c)} != total {self.total}")
        object.__setattr__(self, "counts", c)

    def frequencies(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.total


def sample_shots(probabilities: Sequence[float], n: int,
                 rng: np.random.Generator) -> ShotRecord:
    p = np.asarray(probabilities, dtype=float)
    if n < 1:
        raise ValueError("need at least one shot")
    if abs(p.sum() - 1) > 1e-9 or (p < -1e-12).any():
        raise ValueError("probabilities are not normalized")
    p = np.clip(p, 0, None)
    p = p / p.sum()
    return ShotRecord(tuple(rng.multinomial(n, p)), n)


@dataclass(frozen=True)
class QubitNoise:
    p_flip: float = 0.0
    theta_z: float = 0.0
    T1: float = 22e-3
    T2star: float = 1.8e-6

    def __post_init__(self):
        if not 0.0 <= self.p_flip <= 1.0:
            raise ValueError("p_flip outside [0, 1]")
        if self.T1 <= 0 or self.T2star <= 0:
            raise ValueError("coherence times must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Per-qubit error parameters, readout fidelities and where errors are injected.

    ``placement`` is one of ``after_encode`` (the QEC error slot), ``per_gate``
    or ``idle_window``; the last uses ``t_w`` with quasi-static dephasing averaged
    over shots. Amplitude damping is only applied when ``t1_enabled`` is set.
    """

    qubits: tuple = field(default_factory=lambda: (QubitNoise(),) * 3)
    readout: tuple = ((1.0, 1.0),) * 3
    placement: str = "after_encode"
    t_w: float = 0.0
    t1_enabled: bool = False

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.t_w < 0:
            raise ValueError("t_w must be non-negative")
        for pair in self.readout:
            for f in pair:
                if not 0.0 <= f <= 1.0:
                    raise ValueError("readout fidelity outside [0, 1]")

    @classmethod
    def uniform(cls, p_flip: float = 0.0, theta_z: float = 0.0, **kw) -> "NoiseModel":
        return cls(qubits=(QubitNoise(p_flip, theta_z),) * 3, **kw)

    def qubit_channel(self, qubit: int, duration: float = 0.0) -> KrausChannel:
        """Single-qubit channel for ``qubit`` (1-based) at one injection point."""
        q = self.qubits[qubit - 1]
        ch = phase_flip_channel(q.p_flip).then(KrausChannel.unitary(coherent_z(q.theta_z)))
        if self.placement == "idle_window" and duration > 0:
            ch = ch.then(phase_flip_channel(mean_flip_probability(duration, q.T2star)))
        if self.t1_enabled and duration > 0:
            ch = ch.then(amplitude_damping(q.T1, duration))
        return ch

    def confusion(self) -> np.ndarray:
        return readout_confusion(self.readout)

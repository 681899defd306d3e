"""Gate-level circuits over three spin qubits.

Native gates are x/y rotations (``RX(t) = exp(-i t sx / 2)``), virtual z
rotations, CZ and a general controlled phase on neighbouring pairs, plus an
ideal iToffoli that applies ``i * sx`` to Q2 when Q1 Q3 = |down down>.

Text format (one op per line, ``#`` starts a comment)::

    n_qubits 3
    RY -1.5707963267948966 2
    CZ 0 1 2
    SLOT
    ITOFFOLI_IDEAL 0 1 2 3

``SLOT`` marks the error-injection point used by ``after_encode`` and
``idle_window`` noise placement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .qcore import (
    DOWN, I2, SX, SY, SZ, DensityMatrix, Operator, _arr, embed, embed_channel,
)

KINDS = ("RX", "RY", "RZ_virtual", "CZ", "CPHASE", "ITOFFOLI_IDEAL")
ADJACENT = ((1, 2), (2, 3))


@dataclass(frozen=True)
class GateOp:
    kind: str
    angle: float = 0.0
    targets: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        t = self.targets
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(set(t)) != len(t):
            raise ValueError("gate targets must be distinct")
        if self.kind in ("RX", "RY", "RZ_virtual") and len(t) != 1:
            raise ValueError(f"{self.kind} acts on one qubit")
        if self.kind in ("CZ", "CPHASE") and tuple(sorted(t)) not in ADJACENT:
            raise ValueError(f"{self.kind} needs an adjacent pair, got {t}")
        if self.kind == "ITOFFOLI_IDEAL" and tuple(sorted(t)) != (1, 2, 3):
            raise ValueError("ITOFFOLI_IDEAL acts on all three qubits")


def rx(q: int, angle: float) -> GateOp:
    return GateOp("RX", angle, (q,))


def ry(q: int, angle: float) -> GateOp:
    return GateOp("RY", angle, (q,))


def rz(q: int, angle: float) -> GateOp:
    return GateOp("RZ_virtual", angle, (q,))


def cz(a: int, b: int) -> GateOp:
    return GateOp("CZ", 0.0, (a, b))


def itoffoli() -> GateOp:
    return GateOp("ITOFFOLI_IDEAL", 0.0, (1, 2, 3))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int = 3
    ops: tuple = ()
    error_slot: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        for op in self.ops:
            if max(op.targets) > self.n_qubits or min(op.targets) < 1:
                raise ValueError(f"{op} targets outside {self.n_qubits} qubits")
            if op.kind == "ITOFFOLI_IDEAL" and self.n_qubits != 3:
                raise ValueError("ITOFFOLI_IDEAL needs three qubits")
        if self.error_slot is not None and not 0 <= self.error_slot <= len(self.ops):
            raise ValueError("error slot outside the op list")

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        slot = self.error_slot
        if slot is None and other.error_slot is not None:
            slot = len(self.ops) + other.error_slot
        return Circuit(self.n_qubits, self.ops + other.ops, slot)

    def with_slot(self) -> "Circuit":
        """Same circuit with the error slot placed after the last op."""
        return replace(self, error_slot=len(self.ops))

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, tuple(_inverse_op(op) for op in reversed(self.ops)))


def _inverse_op(op: GateOp) -> GateOp:
    if op.kind == "ITOFFOLI_IDEAL":
        raise ValueError("ITOFFOLI_IDEAL has no native inverse in the gate set")
    if op.kind == "CZ":
        return op
    return replace(op, angle=-op.angle)


def rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * axis


def _controlled_phase(n: int, pair: tuple, phase: float) -> np.ndarray:
    a, b = pair
    d = np.ones(2**n, dtype=complex)
    for idx in range(2**n):
        if (idx >> (n - a)) & 1 and (idx >> (n - b)) & 1:
            d[idx] = np.exp(1j * phase)
    return np.diag(d)


def itoffoli_matrix() -> np.ndarray:
    u = np.eye(8, dtype=complex)
    # Q1 = Q3 = down: indices 0 (|ddd>) and 2 (|dud>)
    u[np.ix_([0, 2], [0, 2])] = 1j * SX
    return u


def gate_unitary(g: GateOp, n_qubits: int = 3) -> Operator:
    if max(g.targets) > n_qubits:
        raise ValueError(f"{g} does not fit in {n_qubits} qubits")
    if g.kind == "RX":
        m = embed(rotation(SX, g.angle), g.targets[0], n_qubits)
    elif g.kind == "RY":
        m = embed(rotation(SY, g.angle), g.targets[0], n_qubits)
    elif g.kind == "RZ_virtual":
        m = embed(rotation(SZ, g.angle), g.targets[0], n_qubits)
    elif g.kind == "CZ":
        m = _controlled_phase(n_qubits, g.targets, np.pi)
    elif g.kind == "CPHASE":
        m = _controlled_phase(n_qubits, g.targets, g.angle)
    else:
        if n_qubits != 3:
            raise ValueError("ITOFFOLI_IDEAL needs three qubits")
        m = itoffoli_matrix()
    return Operator(m, unitary_flag=True)


def circuit_unitary(c: Circuit, overrides: dict | None = None) -> np.ndarray:
    """Total unitary; ``overrides`` maps gate kind -> replacement matrix."""
    u = np.eye(2**c.n_qubits, dtype=complex)
    for op in c.ops:
        if overrides and op.kind in overrides:
            g = np.asarray(overrides[op.kind])
        else:
            g = gate_unitary(op, c.n_qubits).elements
        u = g @ u
    return u


def cnot_decomposition(control: int, target: int, decouple: bool = False,
                       n_qubits: int = 3) -> Circuit:
    """CNOT from -Y/2 . CZ . Y/2 on the target.

    With ``decouple`` the CZ is split into two CZ/2 halves separated and
    followed by Y pulses on both qubits (refocusing quasi-static phase noise);
    the leftover S^dag x S^dag is absorbed by virtual Z rotations.
    """
    if tuple(sorted((control, target))) not in ADJACENT:
        raise ValueError(f"qubits {control} and {target} are not neighbours")
    pair = (control, target)
    ops = [ry(target, -np.pi / 2)]
    if decouple:
        half = GateOp("CPHASE", np.pi / 2, pair)
        flip = [ry(control, np.pi), ry(target, np.pi)]
        ops += [half, *flip, half, *flip, rz(control, np.pi / 2), rz(target, np.pi / 2)]
    else:
        ops.append(GateOp("CZ", 0.0, pair))
    ops.append(ry(target, np.pi / 2))
    return Circuit(n_qubits, tuple(ops))


def cnot_matrix(control: int, target: int, n_qubits: int = 3) -> np.ndarray:
    d = 2**n_qubits
    u = np.zeros((d, d), dtype=complex)
    for idx in range(d):
        out = idx ^ (1 << (n_qubits - target)) if (idx >> (n_qubits - control)) & 1 else idx
        u[out, idx] = 1
    return u


def ghz_circuit(phi: float = 0.0, decouple: bool = False) -> Circuit:
    """Prepare (|ddd> + e^{i phi}|uuu>)/sqrt2 from |ddd> (data qubit Q2)."""
    prep = Circuit(3, (ry(2, np.pi / 2), rz(2, phi)))
    return prep + cnot_decomposition(2, 1, decouple) + cnot_decomposition(2, 3, decouple)


def _as_density(state) -> np.ndarray:
    a = _arr(state)
    if a.ndim == 1:
        return np.outer(a, a.conj())
    return np.array(a, dtype=complex)


def _noise_on(rho: np.ndarray, noise, qubits, n: int, duration: float = 0.0) -> np.ndarray:
    for q in qubits:
        ch = embed_channel(noise.qubit_channel(q, duration), q, n)
        rho = sum(k.elements @ rho @ k.elements.conj().T for k in ch.operators)
    return rho


def execute(c: Circuit, state, noise=None, overrides: dict | None = None) -> DensityMatrix:
    """Run ``c`` on a state vector or density matrix.

    ``noise`` is a :class:`spinqec.noise.NoiseModel`. Channels go after every
    gate on its targets (``per_gate``) or on all qubits at ``c.error_slot``
    (``after_encode`` / ``idle_window``).
    """
    rho = _as_density(state)
    n = c.n_qubits
    if rho.shape[0] != 2**n:
        raise ValueError(f"state dimension {rho.shape[0]} does not match {n} qubits")
    slot_hits = noise is not None and noise.placement != "per_gate"
    for i, op in enumerate(c.ops):
        if slot_hits and i == c.error_slot:
            rho = _noise_on(rho, noise, range(1, n + 1), n, noise.t_w)
        if overrides and op.kind in overrides:
            u = np.asarray(overrides[op.kind])
        else:
            u = gate_unitary(op, n).elements
        rho = u @ rho @ u.conj().T
        if noise is not None and noise.placement == "per_gate":
            rho = _noise_on(rho, noise, op.targets, n)
    if slot_hits and c.error_slot == len(c.ops):
        rho = _noise_on(rho, noise, range(1, n + 1), n, noise.t_w)
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix(rho)


# --- serialization -------------------------------------------------------

def dumps(c: Circuit) -> str:
    lines = [f"n_qubits {c.n_qubits}"]
    for i, op in enumerate(c.ops):
        if i == c.error_slot:
            lines.append("SLOT")
        lines.append(f"{op.kind} {op.angle!r} {' '.join(map(str, op.targets))}")
    if c.error_slot == len(c.ops):
        lines.append("SLOT")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Circuit:
    n, ops, slot = 3, [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "n_qubits":
                n = int(parts[1])
            elif parts[0] == "SLOT":
                slot = len(ops)
            else:
                ops.append(GateOp(parts[0], float(parts[1]), tuple(int(p) for p in parts[2:])))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return Circuit(n, tuple(ops), slot)


# --- single-qubit Cliffords ----------------------------------------------

PRIMITIVES = {
    "I": I2,
    "X": rotation(SX, np.pi),
    "Y": rotation(SY, np.pi),
    "X/2": rotation(SX, np.pi / 2),
    "-X/2": rotation(SX, -np.pi / 2),
    "Y/2": rotation(SY, np.pi / 2),
    "-Y/2": rotation(SY, -np.pi / 2),
}

# Time-ordered primitive sequences; the identity is an explicit idle slot.
CLIFFORD_TABLE = (
    ("I",), ("X",), ("Y",), ("Y", "X"),
    ("X/2", "Y/2"), ("X/2", "-Y/2"), ("-X/2", "Y/2"), ("-X/2", "-Y/2"),
    ("Y/2", "X/2"), ("Y/2", "-X/2"), ("-Y/2", "X/2"), ("-Y/2", "-X/2"),
    ("X/2",), ("-X/2",), ("Y/2",), ("-Y/2",),
    ("-X/2", "Y/2", "X/2"), ("-X/2", "-Y/2", "X/2"),
    ("X", "Y/2"), ("X", "-Y/2"), ("Y", "X/2"), ("Y", "-X/2"),
    ("X/2", "Y/2", "X/2"), ("-X/2", "Y/2", "-X/2"),
)


def primitives_unitary(seq: Sequence[str]) -> np.ndarray:
    u = I2
    for name in seq:
        u = PRIMITIVES[name] @ u
    return u


CLIFFORD_UNITARIES = tuple(primitives_unitary(s) for s in CLIFFORD_TABLE)


def average_primitive_count() -> float:
    return float(np.mean([len(s) for s in CLIFFORD_TABLE]))


def clifford_index(u: np.ndarray, atol: float = 1e-9) -> int:
    """Index of the Clifford equal to ``u`` up to global phase."""
    for k, c in enumerate(CLIFFORD_UNITARIES):
        if abs(abs(np.trace(c.conj().T @ u)) - 2) < atol:
            return k
    raise ValueError("matrix is not a single-qubit Clifford")


@dataclass(frozen=True)
class CliffordSequence:
    m: int
    clifford_ids: tuple
    recovery_id: int
    final_x: bool = False

    def primitives(self) -> list:
        out = []
        for k in (*self.clifford_ids, self.recovery_id):
            out.extend(CLIFFORD_TABLE[k])
        return out

    def unitary(self) -> np.ndarray:
        return primitives_unitary(self.primitives())


def rb_sequences(m: int, count: int, rng_seed, final_x: bool = False) -> list:
    """Random Clifford sequences of length ``m`` with a recovery gate.

    The recovered sequence composes to the identity, or to X when ``final_x``
    (the spin-up-outcome variant).
    """
    if m < 1 or count < 1:
        raise ValueError("m and count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    target = PRIMITIVES["X"] if final_x else I2
    out = []
    for _ in range(count):
        ids = tuple(int(k) for k in rng.integers(0, 24, size=m))
        u = I2
        for k in ids:
            u = CLIFFORD_UNITARIES[k] @ u
        rec = clifford_index(target @ u.conj().T)
        out.append(CliffordSequence(m, ids, rec, final_x))
    return out


def simulate_rb_survival(seq: CliffordSequence, depolarizing: float = 0.0) -> float:
    """Spin-up probability after ``seq`` with a depolarizing channel per primitive.

    ``depolarizing`` is the probability of full depolarization per primitive,
    i.e. rho -> (1 - d) rho + d I/2.
    """
    rho = np.outer(DOWN, DOWN.conj())
    for name in seq.primitives():
        u = PRIMITIVES[name]
        rho = u @ rho @ u.conj().T
        rho = (1 - depolarizing) * rho + depolarizing * I2 / 2
    return float(rho[1, 1].real)

"""Dense linear algebra for states, operators and channels on up to three qubits.

Basis convention: |down> is the computational 0 (ground state) and Q1 is the
most significant bit, so index ``b1 b2 b3`` in binary labels |Q1 Q2 Q3>.
Qubits are addressed with 1-based indices (1, 2, 3) throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-10
PSD_TOL = -1e-8

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)
# spin projection: |down> has s = -1/2, |up> has s = +1/2
SPIN_Z = np.diag([-0.5, 0.5]).astype(complex)

DOWN = np.array([1, 0], dtype=complex)
UP = np.array([0, 1], dtype=complex)


def _n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim or not 1 <= n <= 3:
        raise ValueError(f"dimension {dim} is not 2, 4 or 8")
    return n


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int = field(init=False)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "n_qubits", _n_qubits(a.size))
        norm = np.linalg.norm(a)
        if abs(norm - 1) > ATOL:
            raise ValueError(f"state norm {norm} != 1")

    @classmethod
    def from_labels(cls, labels: str) -> "StateVector":
        """Product state from a string over ``d/u/+/-`` (``'dud'`` is |down up down>)."""
        table = {
            "d": DOWN, "0": DOWN, "u": UP, "1": UP,
            "+": (DOWN + UP) / np.sqrt(2), "-": (DOWN - UP) / np.sqrt(2),
        }
        return cls(reduce(np.kron, [table[c] for c in labels]))

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    elements: np.ndarray
    n_qubits: int = field(init=False)

    def __post_init__(self):
        m = np.array(self.elements, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        m.setflags(write=False)
        object.__setattr__(self, "elements", m)
        object.__setattr__(self, "n_qubits", _n_qubits(m.shape[0]))
        if not np.allclose(m, m.conj().T, atol=ATOL):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1) > ATOL:
            raise ValueError(f"density matrix trace {tr} != 1")
        if np.linalg.eigvalsh(m).min() < PSD_TOL:
            raise ValueError("density matrix is not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.elements).real, 0.0, None)

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))


@dataclass(frozen=True)
class Operator:
    elements: np.ndarray
    unitary_flag: bool = False

    def __post_init__(self):
        m = np.array(self.elements, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator must be square")
        m.setflags(write=False)
        object.__setattr__(self, "elements", m)
        if self.unitary_flag and not is_unitary(m):
            raise ValueError("operator flagged unitary but U^dag U != I")

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def __matmul__(self, other: "Operator") -> "Operator":
        return Operator(self.elements @ other.elements,
                        self.unitary_flag and other.unitary_flag)

    def dag(self) -> "Operator":
        return Operator(self.elements.conj().T, self.unitary_flag)


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple

    def __post_init__(self):
        ops = tuple(k if isinstance(k, Operator) else Operator(k) for k in self.operators)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        dims = {k.dim for k in ops}
        if len(dims) != 1:
            raise ValueError("Kraus operators have mixed dimensions")
        object.__setattr__(self, "operators", ops)
        s = sum(k.elements.conj().T @ k.elements for k in ops)
        if not np.allclose(s, np.eye(ops[0].dim), atol=ATOL):
            raise ValueError("channel is not trace preserving")

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @classmethod
    def unitary(cls, u) -> "KrausChannel":
        return cls((Operator(_arr(u), True),))

    def then(self, other: "KrausChannel") -> "KrausChannel":
        """Sequential composition: apply ``self`` first, then ``other``."""
        return KrausChannel(tuple(Operator(b.elements @ a.elements)
                                  for b in other.operators for a in self.operators))


def _arr(x) -> np.ndarray:
    for attr in ("elements", "amplitudes"):
        if hasattr(x, attr):
            return getattr(x, attr)
    return np.asarray(x, dtype=complex)


def is_unitary(u, atol: float = ATOL) -> bool:
    u = _arr(u)
    return np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol)


def tensor(*ops):
    """Kronecker product, first argument on the most significant qubit."""
    mats = [_arr(o) for o in ops]
    out = reduce(np.kron, mats)
    if all(isinstance(o, Operator) for o in ops):
        return Operator(out, all(o.unitary_flag for o in ops))
    return out


def embed(single: np.ndarray, qubit: int, n_qubits: int = 3) -> np.ndarray:
    """Lift a 2x2 matrix acting on ``qubit`` (1-based) to the full register."""
    mats = [I2] * n_qubits
    mats[qubit - 1] = np.asarray(single, dtype=complex)
    return reduce(np.kron, mats)


def apply_unitary(rho, u) -> np.ndarray:
    u = _arr(u)
    return u @ _arr(rho) @ u.conj().T


def apply_channel(rho, ch: KrausChannel) -> DensityMatrix:
    m = _arr(rho)
    if m.shape[0] != ch.dim:
        raise ValueError(f"channel dimension {ch.dim} does not match state {m.shape[0]}")
    out = sum(k.elements @ m @ k.elements.conj().T for k in ch.operators)
    return DensityMatrix(out)


def embed_channel(ch: KrausChannel, qubit: int, n_qubits: int = 3) -> KrausChannel:
    return KrausChannel(tuple(Operator(embed(k.elements, qubit, n_qubits))
                              for k in ch.operators))


def partial_trace(rho, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the 1-based qubits in ``keep`` (kept in ascending order)."""
    keep = sorted(set(keep))
    m = _arr(rho)
    n = _n_qubits(m.shape[0])
    if not keep:
        raise ValueError("keep set must be nonempty")
    if keep[0] < 1 or keep[-1] > n:
        raise ValueError(f"qubits {keep} out of range for {n} qubits")
    letters = "abcdefghijkl"
    row = list(letters[:n])
    col = [row[q - 1] if q not in keep else letters[n + q - 1] for q in range(1, n + 1)]
    out = [row[q - 1] for q in keep] + [col[q - 1] for q in keep]
    t = np.einsum(f"{''.join(row)}{''.join(col)}->{''.join(out)}", m.reshape([2] * (2 * n)))
    d = 2 ** len(keep)
    return DensityMatrix(t.reshape(d, d))


def state_fidelity(rho, target) -> float:
    """<target|rho|target> for a pure target, (Tr sqrt(sqrt(s) rho sqrt(s)))^2 for a mixed one."""
    m = _arr(rho)
    v = _arr(target)
    if v.shape[0] != m.shape[0]:
        raise ValueError("target dimension does not match state")
    if v.ndim == 1:
        return float(np.real(v.conj() @ m @ v))
    w, u = np.linalg.eigh(v)
    sq = (u * np.sqrt(np.clip(w, 0, None))) @ u.conj().T
    ev = np.linalg.eigvalsh(sq @ m @ sq)
    return float(min(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2, 1.0))


def ghz_state(phi: float = 0.0) -> StateVector:
    v = np.zeros(8, dtype=complex)
    v[0] = 1 / np.sqrt(2)
    v[7] = np.exp(1j * phi) / np.sqrt(2)
    return StateVector(v)


def basis_state(index: int, n_qubits: int = 3) -> StateVector:
    v = np.zeros(2**n_qubits, dtype=complex)
    v[index] = 1
    return StateVector(v)


def equal_up_to_global_phase(a, b, atol: float = ATOL) -> bool:
    """Compare two states or operators ignoring a global phase."""
    a, b = _arr(a).ravel(), _arr(b).ravel()
    k = np.argmax(np.abs(b))
    if abs(b[k]) < atol:
        return np.allclose(a, b, atol=atol)
    phase = a[k] / b[k]
    if abs(abs(phase) - 1) > 1e-6:
        return False
    return np.allclose(a, phase * b, atol=atol)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_channel(dim: int, rng: np.random.Generator, n_kraus: int = 3) -> KrausChannel:
    """Random CPTP map from a Stinespring isometry."""
    u = random_unitary(dim * n_kraus, rng)
    iso = u[:, :dim]
    return KrausChannel(tuple(Operator(iso[k * dim:(k + 1) * dim]) for k in range(n_kraus)))


def pauli_products(labels: Sequence[str]) -> np.ndarray:
    lookup = dict(zip("IXYZ", PAULIS))
    return reduce(np.kron, [lookup[c] for c in labels])

"""Maximum-likelihood reconstruction of states, single-qubit processes and
classical truth tables, plus readout-error inversion.

State tomography uses pre-rotations (I, X/2, Y/2, X) on every qubit followed
by a computational-basis measurement: 64 settings x 8 outcomes. The
density matrix is parametrized as rho = T^dag T / Tr(T^dag T) with T lower
triangular (64 real numbers) and fitted to

    C(t) = sum_v (p_v(t) - P_v)^2 / (2 p_v(t))

over every (setting, outcome) projector. Process tomography follows the
same recipe for chi in the Pauli basis (I, sx, sy, sz) with a plain
squared-error cost on spin-down probabilities.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .circuits import PRIMITIVES, itoffoli_matrix
from .noise import readout_confusion
from .qcore import DOWN, PAULIS, DensityMatrix, KrausChannel, _arr

log = logging.getLogger(__name__)

PRE_ROTATIONS = ("I", "X/2", "Y/2", "X")
PROCESS_INPUTS = ("I", "X/2", "Y/2", "X")
PROCESS_MEASUREMENTS = ("I", "X/2", "Y/2", "X")
COST_EPS = 1e-9
# a start that already fits the data to rounding error cannot be improved on
EXACT_COST = 1e-24


class ConvergenceError(RuntimeError):
    pass


# --- readout ---------------------------------------------------------------

def readout_invert(P_M: Sequence[float], fidelities) -> np.ndarray:
    """Undo readout confusion by exact linear inversion (negatives are kept)."""
    for fd, fu in fidelities:
        if fd + fu <= 1:
            raise ValueError(f"readout fidelities ({fd}, {fu}) give a singular confusion matrix")
    return np.linalg.solve(readout_confusion(fidelities), np.asarray(P_M, dtype=float))


# --- settings and forward model ---------------------------------------------

def state_settings(n_qubits: int = 3) -> list:
    """All pre-rotation label tuples, Q1 slowest."""
    return list(itertools.product(PRE_ROTATIONS, repeat=n_qubits))


@lru_cache(maxsize=4)
def _setting_unitaries(n_qubits: int) -> np.ndarray:
    return np.array([reduce(np.kron, [PRIMITIVES[l] for l in s]) for s in state_settings(n_qubits)])


def forward_probabilities(rho, n_qubits: int | None = None) -> np.ndarray:
    """Outcome probabilities, shape (settings, 2^n), for every pre-rotation setting."""
    m = _arr(rho)
    n = n_qubits or int(np.log2(m.shape[0]))
    u = _setting_unitaries(n)
    out = np.einsum("sij,jk,sik->si", u, m, u.conj())
    return out.real


def apply_x_from_i(probs: np.ndarray, n_qubits: int = 3) -> np.ndarray:
    """Replace outcomes of settings with an X pre-rotation by bit-flipped outcomes
    of the matching setting with I in its place."""
    probs = np.array(probs, dtype=float)
    settings = state_settings(n_qubits)
    index = {s: k for k, s in enumerate(settings)}
    for k, s in enumerate(settings):
        xs = [q for q, lab in enumerate(s) if lab == "X"]
        if not xs:
            continue
        src = tuple("I" if lab == "X" else lab for lab in s)
        mask = sum(1 << (n_qubits - 1 - q) for q in xs)
        perm = np.arange(2**n_qubits) ^ mask
        probs[k] = probs[index[src]][perm]
    return probs


def _cholesky_params(rho: np.ndarray) -> np.ndarray:
    """Real parameter vector of a lower-triangular T with T^dag T = rho."""
    d = rho.shape[0]
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 1e-6, None)
    m = (v * w) @ v.conj().T
    m = m / np.trace(m).real
    # rho = T^dag T with T lower triangular: T = L^dag where L is the upper-triangular
    # factor of the reversed Cholesky decomposition
    jrev = np.eye(d)[::-1]
    low = np.linalg.cholesky(jrev @ m.T @ jrev)
    tmat = (jrev @ low @ jrev).T
    return _tri_to_params(tmat)


def _tri_to_params(tmat: np.ndarray) -> np.ndarray:
    d = tmat.shape[0]
    il = np.tril_indices(d, -1)
    return np.concatenate([np.diag(tmat).real, tmat[il].real, tmat[il].imag])


def _params_to_tri(t: np.ndarray, d: int) -> np.ndarray:
    il = np.tril_indices(d, -1)
    k = len(il[0])
    tmat = np.diag(t[:d]).astype(complex)
    tmat[il] = t[d:d + k] + 1j * t[d + k:]
    return tmat


def params_to_density(t: np.ndarray, d: int) -> np.ndarray:
    tmat = _params_to_tri(np.asarray(t, dtype=float), d)
    m = tmat.conj().T @ tmat
    return m / np.trace(m).real


def linear_inversion_state(probs: np.ndarray, n_qubits: int = 3) -> np.ndarray:
    """Unconstrained least-squares density matrix from outcome probabilities."""
    d = 2**n_qubits
    u = _setting_unitaries(n_qubits)
    # p_{s,b} = sum_jk conj(u_sbj) u_sbk rho_jk -> linear in vec(rho)
    a = np.einsum("sbj,sbk->sbjk", u.conj(), u).reshape(-1, d * d)
    vec, *_ = np.linalg.lstsq(a, np.asarray(probs, dtype=float).reshape(-1), rcond=None)
    # rows of ``a`` act on rho^T ordering (j, k) -> rho[k, j]
    rho = vec.reshape(d, d).T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


@dataclass
class MLEInfo:
    cost: float
    converged: bool
    restarts: int
    message: str = ""
    rank: int = 0
    kkt_violation: float = 0.0


@lru_cache(maxsize=4)
def _projectors(n_qubits: int) -> np.ndarray:
    """A_v with p_v = Tr(A_v rho), one per (setting, outcome)."""
    u = _setting_unitaries(n_qubits)
    d = 2**n_qubits
    return np.einsum("sbk,sbj->sbkj", u.conj(), u).reshape(-1, d, d)


def _weighted(p, data):
    """Residuals and their derivative with respect to p."""
    w = 2 * (p + COST_EPS)
    return (p - data) / np.sqrt(w), w**-0.5 - (p - data) * w**-1.5


def _state_model(t, d):
    tmat = _params_to_tri(t, d)
    m = tmat.conj().T @ tmat
    return tmat, m, np.trace(m).real


def _state_residuals(t, a, data, d):
    _, m, norm = _state_model(t, d)
    p = np.einsum("vkj,jk->v", a, m).real / norm
    return _weighted(p, data)[0]


def _state_jacobian(t, a, data, d):
    tmat, m, norm = _state_model(t, d)
    p = np.einsum("vkj,jk->v", a, m).real / norm
    il = np.tril_indices(d, -1)
    diag = np.arange(d)
    # d Tr(A T^dag T) / d T_ij = 2 (A T^dag)_ji for real parts, -2 Im(...) for imaginary parts
    g = a @ tmat.conj().T
    gn = tmat.conj().T

    def cols(x):
        return np.concatenate([2 * x[..., diag, diag].real, 2 * x[..., il[1], il[0]].real,
                               -2 * x[..., il[1], il[0]].imag], axis=-1)

    dp = (cols(g) - p[:, None] * cols(gn)[None, :]) / norm
    return _weighted(p, data)[1][:, None] * dp


# Rank-r refinement: rho = F F^dag / Tr with F a d x r complex matrix. Near a
# rank-deficient optimum the full triangular factor has a quartic valley
# that damped least squares crawls along; at the right rank the optimum is regular.

def _factor(x, d, r):
    return (x[:d * r] + 1j * x[d * r:]).reshape(d, r)


def _factor_residuals(x, a, data, d, r):
    f = _factor(x, d, r)
    m = f @ f.conj().T
    p = np.einsum("vkj,jk->v", a, m).real / np.trace(m).real
    return _weighted(p, data)[0]


def _factor_jacobian(x, a, data, d, r):
    f = _factor(x, d, r)
    m = f @ f.conj().T
    norm = np.trace(m).real
    p = np.einsum("vkj,jk->v", a, m).real / norm
    # dq = 2 Re Tr(F^dag A dF)
    mt = np.swapaxes(f.conj().T @ a, 1, 2)
    dq = np.concatenate([2 * mt.real.reshape(p.size, -1), -2 * mt.imag.reshape(p.size, -1)], axis=1)
    dn = np.concatenate([2 * f.real.ravel(), 2 * f.imag.ravel()])
    dp = (dq - p[:, None] * dn[None, :]) / norm
    return _weighted(p, data)[1][:, None] * dp


def state_gradient(rho, probs, n_qubits: int = 3) -> np.ndarray:
    """Gradient of the cost with respect to rho (Hermitian d x d)."""
    a = _projectors(n_qubits)
    data = np.asarray(probs, dtype=float).reshape(-1)
    p = np.einsum("vkj,jk->v", a, _arr(rho)).real
    w = p + COST_EPS
    g = (p - data) / w - (p - data) ** 2 / (2 * w * w)
    return np.tensordot(g, a, 1)


def kkt_violation(rho, probs, n_qubits: int = 3) -> float:
    """Distance from optimality over density matrices.

    The cost is convex in rho, so rho is optimal iff G - Tr(G rho) I is
    positive semidefinite and annihilates rho. Returns the largest violation
    of either condition.
    """
    m = _arr(rho)
    g = state_gradient(m, probs, n_qubits)
    s = g - np.trace(g @ m).real * np.eye(m.shape[0])
    s = (s + s.conj().T) / 2
    return float(max(-np.linalg.eigvalsh(s).min(), np.abs(s @ m).max(), 0.0))


def _refine_rank(m, a, data, d, tol):
    """Refine ``m`` on factors of increasing rank until the optimality check passes."""
    w, v = np.linalg.eigh(m)
    w, v = w[::-1], v[:, ::-1]
    r0 = max(1, int(np.sum(w > 1e-3 * w[0])))
    best = None
    for r in range(r0, d + 1):
        f0 = v[:, :r] * np.sqrt(np.clip(w[:r], 1e-8, None))
        x0 = np.concatenate([f0.real.ravel(), f0.imag.ravel()])
        sol = least_squares(_factor_residuals, x0, jac=_factor_jacobian, args=(a, data, d, r),
                            method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=1000)
        f = _factor(sol.x, d, r)
        rho = f @ f.conj().T
        rho = rho / np.trace(rho).real
        viol = kkt_violation(rho, data.reshape(-1, d))
        if best is None or sol.cost < best[1]:
            best = (rho, sol.cost, r, viol)
        if viol < tol:
            break
    return best


def state_mle(probs, n_qubits: int = 3, x_from_i: bool = True, restarts: int = 4,
              seed: int = 0, return_info: bool = False, strict: bool = False,
              kkt_tol: float = 1e-6):
    """Physical density matrix minimizing the weighted squared-error cost.

    ``probs`` has shape (64, 8) in :func:`state_settings` order. Damped least
    squares on the 64 Cholesky parameters runs from the PSD-projected linear
    inversion and ``restarts`` seeded random points; the best result is then
    refined at its numerical rank until the convex optimality conditions hold
    to ``kkt_tol``. With ``strict`` a failed optimization raises
    :class:`ConvergenceError`.
    """
    d = 2**n_qubits
    probs = np.asarray(probs, dtype=float).reshape(4**n_qubits, d)
    if x_from_i:
        probs = apply_x_from_i(probs, n_qubits)
    data = probs.reshape(-1)
    a = _projectors(n_qubits)
    rng = np.random.default_rng(seed)
    starts = [_cholesky_params(linear_inversion_state(probs, n_qubits))]
    starts += [rng.normal(size=d * d) for _ in range(restarts)]
    best, tried = None, 0
    for t0 in starts:
        # trf rather than MINPACK: its arithmetic does not depend on heap layout
        sol = least_squares(_state_residuals, t0, jac=_state_jacobian, args=(a, data, d),
                            method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=200)
        tried += 1
        if best is None or sol.cost < best.cost:
            best = sol
        if best.cost < EXACT_COST:
            break
    rho = params_to_density(best.x, d)
    cost = float(2 * best.cost)
    rank = int(np.linalg.matrix_rank(rho, tol=1e-9))
    if cost < EXACT_COST:
        viol = 0.0
    else:
        viol = kkt_violation(rho, probs, n_qubits)
        if viol >= kkt_tol:
            r_rho, r_cost, rank, r_viol = _refine_rank(rho, a, data, d, kkt_tol)
            if 2 * r_cost <= cost:
                rho, cost, viol = r_rho, float(2 * r_cost), r_viol
    info = MLEInfo(cost, viol < kkt_tol, tried, "", rank, viol)
    if not info.converged:
        info.message = f"state MLE did not converge (cost {cost:.3e}, optimality violation {viol:.2e})"
        if strict:
            raise ConvergenceError(info.message)
        log.warning(info.message)
    rho = DensityMatrix((rho + rho.conj().T) / 2)
    return (rho, info) if return_info else rho


def state_cost(rho, probs, n_qubits: int = 3) -> float:
    p = forward_probabilities(rho, n_qubits).reshape(-1)
    data = np.asarray(probs, dtype=float).reshape(-1)
    return float(np.sum((p - data) ** 2 / (2 * (np.abs(p) + COST_EPS))))


# --- process tomography ----------------------------------------------------

@dataclass(frozen=True)
class ProcessMatrix:
    chi: np.ndarray

    def __post_init__(self):
        c = np.array(self.chi, dtype=complex)
        if c.shape != (4, 4):
            raise ValueError("chi must be 4x4")
        if not np.allclose(c, c.conj().T, atol=1e-10):
            raise ValueError("chi is not Hermitian")
        if np.linalg.eigvalsh(c).min() < -1e-8:
            raise ValueError("chi is not positive semidefinite")
        tr = np.trace(c).real
        if not 0 < tr <= 1 + 1e-10:
            raise ValueError(f"chi trace {tr} outside (0, 1]")
        c.setflags(write=False)
        object.__setattr__(self, "chi", c)

    def fidelity(self) -> float:
        """Process fidelity to the identity, chi_II."""
        return process_fidelity(self.chi)

    def apply(self, rho) -> np.ndarray:
        m = _arr(rho)
        return sum(self.chi[a, b] * PAULIS[a] @ m @ PAULIS[b].conj().T
                   for a in range(4) for b in range(4))


def process_fidelity(chi, ideal=None) -> float:
    """Overlap Tr(chi chi_ideal); for the identity process this is chi_II."""
    chi = np.asarray(getattr(chi, "chi", chi))
    if ideal is None:
        return float(chi[0, 0].real)
    return float(np.trace(chi @ np.asarray(ideal)).real)


def process_inputs() -> list:
    return [PRIMITIVES[l] @ np.outer(DOWN, DOWN.conj()) @ PRIMITIVES[l].conj().T
            for l in PROCESS_INPUTS]


def process_observables() -> list:
    """Spin-down projectors after each tomographic pre-rotation."""
    down = np.outer(DOWN, DOWN.conj())
    return [PRIMITIVES[l].conj().T @ down @ PRIMITIVES[l] for l in PROCESS_MEASUREMENTS]


@lru_cache(maxsize=1)
def _process_design() -> np.ndarray:
    """A[k, l, m, n] = Tr(M_l B_m rho_k B_n^dag)."""
    rhos, obs = process_inputs(), process_observables()
    a = np.empty((4, 4, 4, 4), dtype=complex)
    for k, l, m, n in itertools.product(range(4), repeat=4):
        a[k, l, m, n] = np.trace(obs[l] @ PAULIS[m] @ rhos[k] @ PAULIS[n].conj().T)
    return a


def process_probabilities(chi) -> np.ndarray:
    chi = np.asarray(getattr(chi, "chi", chi))
    return np.einsum("klmn,mn->kl", _process_design(), chi).real


def channel_probabilities(output_states: Sequence) -> np.ndarray:
    """P_down[k][l] from the four output density matrices (computed-X column included)."""
    obs = process_observables()
    return np.array([[np.trace(o @ _arr(r)).real for o in obs] for r in output_states])


def complete_x_column(p_down: np.ndarray) -> np.ndarray:
    """Fill the X pre-rotation column from the I column (P_down after X = P_up)."""
    p = np.array(p_down, dtype=float)
    p[:, 3] = 1 - p[:, 0]
    return p


def chi_from_kraus(ch) -> np.ndarray:
    """Exact chi of a single-qubit channel from its Kraus operators."""
    ops = ch.operators if isinstance(ch, KrausChannel) else ch
    chi = np.zeros((4, 4), dtype=complex)
    for k in ops:
        a = np.array([np.trace(PAULIS[m].conj().T @ _arr(k)) / 2 for m in range(4)])
        chi += np.outer(a, a.conj())
    return chi


def chi_from_outputs(output_states: Sequence) -> np.ndarray:
    """Exact chi by linear inversion of E(rho_k) for the four standard inputs."""
    rhos = process_inputs()
    # E(rho) = sum chi_mn B_m rho B_n^dag  ->  linear system in the 16 chi_mn
    a = np.empty((4, 4, 16), dtype=complex)
    cols = []
    for m, n in itertools.product(range(4), repeat=2):
        cols.append(np.stack([PAULIS[m] @ r @ PAULIS[n].conj().T for r in rhos]))
    a = np.stack(cols, axis=-1).reshape(16, 16)
    b = np.stack([_arr(r) for r in output_states]).reshape(16)
    chi = np.linalg.solve(a, b).reshape(4, 4)
    return (chi + chi.conj().T) / 2


@lru_cache(maxsize=1)
def _hermitian_basis() -> np.ndarray:
    """Orthonormal (Frobenius) basis of 4x4 Hermitian matrices."""
    out = []
    for m in range(4):
        e = np.zeros((4, 4), dtype=complex)
        e[m, m] = 1
        out.append(e)
    for m, n in itertools.combinations(range(4), 2):
        e = np.zeros((4, 4), dtype=complex)
        e[m, n] = e[n, m] = 1 / np.sqrt(2)
        out.append(e)
        e = np.zeros((4, 4), dtype=complex)
        e[m, n], e[n, m] = -1j / np.sqrt(2), 1j / np.sqrt(2)
        out.append(e)
    return np.array(out)


@lru_cache(maxsize=1)
def _process_operator() -> np.ndarray:
    """Real 16x16 map from Hermitian-basis coordinates of chi to the P_down table."""
    d = _process_design().reshape(16, 4, 4)
    return np.einsum("imn,bmn->ib", d, _hermitian_basis()).real


def _project_density(chi: np.ndarray) -> np.ndarray:
    """Frobenius projection onto positive semidefinite matrices of unit trace."""
    w, v = np.linalg.eigh((chi + chi.conj().T) / 2)
    return (v * project_simplex(w)) @ v.conj().T


def process_mle(p_down, return_info: bool = False, strict: bool = False,
                tol: float = 1e-13, max_iter: int = 50_000) -> ProcessMatrix:
    """Physical chi (trace 1) minimizing sum_kl (P_down^kl - model^kl)^2.

    The model is linear in chi and the 16 data determine chi uniquely, so the
    cost is strongly convex over the physical set. Accelerated projected
    gradient from the projected linear inversion reaches the global optimum;
    it stops once a plain projected-gradient step moves chi by less than ``tol``.
    """
    data = np.asarray(p_down, dtype=float)
    if data.shape != (4, 4):
        raise ValueError("expected a 4x4 table of spin-down probabilities")
    a = _process_operator()
    basis = _hermitian_basis()
    b = data.reshape(-1)
    step = 1 / (2 * np.linalg.norm(a, 2) ** 2)

    def to_chi(x):
        return np.tensordot(x, basis, 1)

    def to_x(chi):
        return np.einsum("bmn,mn->b", basis.conj(), chi).real

    x = to_x(_project_density(to_chi(np.linalg.solve(a, b))))
    y, t, moved, it = x.copy(), 1.0, np.inf, 0
    for it in range(1, max_iter + 1):
        x_new = to_x(_project_density(to_chi(y - step * 2 * a.T @ (a @ y - b))))
        moved = float(np.linalg.norm(x_new - y))
        if moved < tol:
            x = x_new
            break
        if np.dot(y - x_new, x_new - x) > 0:
            # momentum points uphill: restart from the last iterate
            y, t = x.copy(), 1.0
            continue
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        y = x_new + (t - 1) / t_new * (x_new - x)
        x, t = x_new, t_new
    cost = float(np.sum((a @ x - b) ** 2))
    chi = to_chi(x)
    info = MLEInfo(cost, moved < tol, 0, f"{it} iterations",
                   int(np.linalg.matrix_rank(chi, tol=1e-9)))
    if not info.converged:
        msg = f"process MLE did not converge (cost {cost:.3e}, last step {moved:.1e})"
        if strict:
            raise ConvergenceError(msg)
        log.warning(msg)
    pm = ProcessMatrix((chi + chi.conj().T) / 2)
    return (pm, info) if return_info else pm


# --- truth table -----------------------------------------------------------

@dataclass(frozen=True)
class TruthTable:
    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.shape != (8, 8):
            raise ValueError("truth table must be 8x8")
        if (t < 0).any():
            raise ValueError("negative truth-table entry")
        if not np.allclose(t.sum(axis=1), 1, atol=1e-9):
            raise ValueError("truth-table rows must sum to 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0)


def truthtable_mle(P) -> TruthTable:
    """Non-negative, row-normalized table closest to ``P`` in squared error.

    The cost separates over rows, and each row's constrained minimizer is the
    simplex projection, so this is the exact optimum.
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (8, 8):
        raise ValueError("truth table must be 8x8")
    return TruthTable(np.array([project_simplex(row) for row in P]))


def ideal_itoffoli_table() -> np.ndarray:
    return (np.abs(itoffoli_matrix()) ** 2).T


def population_transfer_fidelity(table, ideal=None) -> float:
    """Tr(U_expt U_ideal)/8 with both classical actions as row-stochastic tables."""
    t = np.asarray(getattr(table, "table", table), dtype=float)
    ideal = ideal_itoffoli_table() if ideal is None else np.asarray(ideal, dtype=float)
    return float(np.trace(t @ ideal.T) / t.shape[0])


# --- witness ---------------------------------------------------------------

def ghz_witness(F: float) -> str:
    """Classify a GHZ fidelity: above 0.75 excludes W-class, above 0.5 excludes biseparable."""
    if not 0 <= F <= 1:
        raise ValueError("fidelity outside [0, 1]")
    if F > 0.75:
        return "GHZ-class"
    if F > 0.5:
        return "W-class-or-better"
    return "biseparable-or-better"


# --- count files -------------------------------------------------------------

COUNT_COLUMNS = ["setting_id", "pre_rotation_labels"] + [
    f"count_{b:03b}" for b in range(8)] + ["total"]


def write_counts(fh, counts: np.ndarray, settings=None) -> None:
    settings = state_settings() if settings is None else settings
    counts = np.asarray(counts, dtype=int)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(COUNT_COLUMNS)
    for k, (s, row) in enumerate(zip(settings, counts)):
        w.writerow([k, " ".join(s), *map(int, row), int(row.sum())])


def write_counts_csv(path, counts: np.ndarray, settings=None) -> None:
    with open(path, "w", newline="") as fh:
        write_counts(fh, counts, settings)


def read_counts_csv(path) -> tuple:
    """Validated (settings, counts) from a count file; errors name the line."""
    settings, counts = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != COUNT_COLUMNS:
            raise ValueError(f"{path}:1: header must be {','.join(COUNT_COLUMNS)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(COUNT_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(COUNT_COLUMNS)} fields, got {len(row)}")
            try:
                sid = int(row[0])
                vals = [int(v) for v in row[2:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer field") from None
            labels = tuple(row[1].split())
            if len(labels) != 3 or any(l not in PRE_ROTATIONS for l in labels):
                raise ValueError(f"{path}:{lineno}: bad pre-rotation labels {row[1]!r}")
            if sid != len(settings):
                raise ValueError(f"{path}:{lineno}: setting_id {sid} out of order")
            if any(v < 0 for v in vals):
                raise ValueError(f"{path}:{lineno}: negative count")
            if sum(vals[:8]) != vals[8]:
                raise ValueError(f"{path}:{lineno}: counts sum {sum(vals[:8])} != total {vals[8]}")
            if vals[8] == 0:
                raise ValueError(f"{path}:{lineno}: zero total")
            settings.append(labels)
            counts.append(vals[:8])
    if settings != state_settings():
        raise ValueError(f"{path}: expected the 64 settings in standard order")
    return settings, np.array(counts)


def matrix_to_json(m) -> str:
    m = np.asarray(_arr(m))
    return json.dumps({"real": m.real.round(15).tolist(), "imag": m.imag.round(15).tolist()})


def matrix_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    return np.array(obj["real"]) + 1j * np.array(obj["imag"])

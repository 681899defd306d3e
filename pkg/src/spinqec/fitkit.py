"""Nonlinear least-squares fits for the characterization experiments.

All fitters run Levenberg-Marquardt (MINPACK via ``scipy.optimize.least_squares``)
from automatic initial guesses, and report 1-sigma errors from the
Jacobian covariance ``s^2 (J^T J)^-1`` at the optimum.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

RB_GATES_PER_CLIFFORD = 1.875


@dataclass
class FitResult:
    params: dict
    stderrs: dict
    residual_norm: float
    converged: bool
    message: str = ""
    derived: dict = field(default_factory=dict)
    model: "Model | None" = field(default=None, repr=False, compare=False)

    def predict(self, x) -> np.ndarray:
        if self.model is None:
            raise ValueError("fit result carries no model")
        return self.model(x, [self.params[n] for n in self.model.names])

    def to_text(self) -> str:
        return json.dumps({
            "params": self.params, "stderrs": self.stderrs, "derived": self.derived,
            "residual_norm": self.residual_norm, "converged": self.converged,
            "message": self.message,
        }, indent=2, sort_keys=True)


@dataclass(frozen=True)
class Model:
    names: tuple
    func: Callable
    jac: Callable | None = None

    def __call__(self, x, p):
        return self.func(np.asarray(x, dtype=float), *p)


def numeric_jacobian(model: Model, x, p, rel: float = 1e-6) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    cols = []
    for k in range(p.size):
        h = rel * max(abs(p[k]), 1e-3)
        up, dn = p.copy(), p.copy()
        up[k] += h
        dn[k] -= h
        cols.append((model(x, up) - model(x, dn)) / (2 * h))
    return np.stack(cols, axis=-1)


def fit(model: Model, x, y, p0, weights=None, min_points: int = 4) -> FitResult:
    """Generic weighted least-squares fit of ``model`` to ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < max(min_points, len(model.names) + 1):
        raise ValueError(f"need at least {max(min_points, len(model.names) + 1)} points")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)

    def resid(p):
        return w * (model(x, p) - y)

    def jac(p):
        return w[:, None] * model.jac(x, *p)

    try:
        sol = least_squares(resid, np.asarray(p0, dtype=float), jac=jac if model.jac is not None else "2-point",
                            method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return FitResult(dict(zip(model.names, map(float, p0))), {}, float("inf"), False, str(exc),
                         model=model)
    params = dict(zip(model.names, map(float, sol.x)))
    rn = float(np.linalg.norm(sol.fun))
    converged = bool(sol.success and np.all(np.isfinite(sol.x)))
    stderrs = {}
    msg = sol.message
    if converged:
        jm = sol.jac
        dof = max(x.size - len(model.names), 1)
        s2 = rn**2 / dof
        try:
            cov = np.linalg.inv(jm.T @ jm) * s2
            errs = np.sqrt(np.clip(np.diag(cov), 0, None))
        except np.linalg.LinAlgError:
            errs = np.full(len(model.names), np.inf)
            msg = "singular Jacobian: parameters not identifiable"
            converged = False
        if converged:
            stderrs = dict(zip(model.names, map(float, errs)))
    return FitResult(params, stderrs, rn, converged, msg, model=model)


# --- models ---------------------------------------------------------------

def _gdecay(t, A, kappa, df, phi, B):
    return A * np.exp(-kappa * t**2) * np.cos(2 * np.pi * df * t + phi) + B


def _gdecay_jac(t, A, kappa, df, phi, B):
    env = np.exp(-kappa * t**2)
    c = np.cos(2 * np.pi * df * t + phi)
    s = np.sin(2 * np.pi * df * t + phi)
    return np.stack([env * c, -A * t**2 * env * c, -A * env * s * 2 * np.pi * t,
                     -A * env * s, np.ones_like(t)], axis=-1)


# decay enters as kappa = 1/T2*^2 so a flat envelope (kappa = 0) is reachable
GAUSSIAN_DECAY = Model(("A", "kappa", "df", "phi", "B"), _gdecay, _gdecay_jac)


def _stretched(t, V, T, g):
    return V * np.exp(-(t / T) ** g)


def _stretched_jac(t, V, T, g):
    u = np.clip(t / T, 1e-300, None)
    e = np.exp(-u**g)
    ug = u**g
    return np.stack([e, V * e * g * ug / T, -V * e * ug * np.log(u)], axis=-1)


STRETCHED_EXP = Model(("V", "T2H", "gamma"), _stretched, _stretched_jac)


def _expdecay(t, A, T1, B):
    return A * np.exp(-t / T1) + B


def _expdecay_jac(t, A, T1, B):
    e = np.exp(-t / T1)
    return np.stack([e, A * e * t / T1**2, np.ones_like(t)], axis=-1)


EXP_DECAY = Model(("A", "T1", "B"), _expdecay, _expdecay_jac)


def _rb(m, V, p):
    return V * p**m


def _rb_jac(m, V, p):
    return np.stack([p**m, V * m * p ** (m - 1)], axis=-1)


RB_DECAY = Model(("V", "p"), _rb, _rb_jac)


def _sinusoid(t, V, J_off):
    return V * np.sin(np.pi * t * J_off)


def _sinusoid_jac(t, V, J_off):
    return np.stack([np.sin(np.pi * t * J_off), V * np.pi * t * np.cos(np.pi * t * J_off)], axis=-1)


SINUSOID = Model(("V", "J_off"), _sinusoid, _sinusoid_jac)


def _gpeak(x, A, x0, w, B):
    return A * np.exp(-((x - x0) ** 2) / (2 * w**2)) + B


def _gpeak_jac(x, A, x0, w, B):
    e = np.exp(-((x - x0) ** 2) / (2 * w**2))
    return np.stack([e, A * e * (x - x0) / w**2, A * e * (x - x0) ** 2 / w**3,
                     np.ones_like(x)], axis=-1)


GAUSSIAN_PEAK = Model(("A", "x0", "width", "B"), _gpeak, _gpeak_jac)


# --- initial guesses -----------------------------------------------------

def _fft_peak(t, y) -> tuple[float, float]:
    """Dominant frequency and phase of uniformly resampled, mean-removed data."""
    t = np.asarray(t, dtype=float)
    grid = np.linspace(t.min(), t.max(), t.size)
    yi = np.interp(grid, t, y) - np.mean(y)
    n = 8 * t.size
    spec = np.fft.rfft(yi, n)
    freqs = np.fft.rfftfreq(n, grid[1] - grid[0])
    k = int(np.argmax(np.abs(spec[1:]))) + 1
    phase = float(np.angle(spec[k] * np.exp(2j * np.pi * freqs[k] * grid[0])))
    return float(freqs[k]), phase


def _with_stderr(res: FitResult, name: str, value: float, err: float | None):
    res.derived[name] = value
    if err is not None and res.converged:
        res.derived[name + "_stderr"] = err


# --- public fitters --------------------------------------------------------

def fit_gaussian_decay(t, y, weights=None) -> FitResult:
    """A exp(-(t/T2*)^2) cos(2 pi df t + phi) + B, with FFT / envelope guesses."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 8:
        raise ValueError("need at least 8 points")
    df0, phi0 = _fft_peak(t, y)
    B0 = float(np.mean(y))
    A0 = float(np.max(np.abs(y - B0)))
    best = None
    span = t.max() - t.min()
    for frac in (0.25, 0.5, 1.0, 3.0):
        kappa0 = 1.0 / (frac * span) ** 2
        for ph in (phi0, phi0 + np.pi / 2, phi0 - np.pi / 2):
            r = fit(GAUSSIAN_DECAY, t, y, (A0, kappa0, df0, ph, B0), weights, 8)
            if r.converged and (best is None or r.residual_norm < best.residual_norm):
                best = r
    if best is None:
        return fit(GAUSSIAN_DECAY, t, y, (A0, 1 / span**2, df0, phi0, B0), weights, 8)
    dts = np.diff(np.sort(t))
    if np.allclose(dts, dts[0], rtol=1e-6):
        # uniform sampling cannot tell df from its aliases; keep the one below Nyquist
        fs = 1.0 / dts[0]
        k = np.round(best.params["df"] / fs)
        if k != 0:
            p = dict(best.params)
            p["df"] -= k * fs
            p["phi"] += 2 * np.pi * k * fs * t.min()
            r = fit(GAUSSIAN_DECAY, t, y, tuple(p[n] for n in GAUSSIAN_DECAY.names), weights, 8)
            if r.converged:
                best = r
    if best.params["A"] < 0:
        best.params["A"] *= -1
        best.params["phi"] += np.pi
    best.params["phi"] = float((best.params["phi"] + np.pi) % (2 * np.pi) - np.pi)
    if best.params["df"] < 0:
        best.params["df"] *= -1
        best.params["phi"] *= -1
    kappa = best.params["kappa"]
    k_err = best.stderrs.get("kappa")
    rate = float(np.sign(kappa) * np.sqrt(abs(kappa)))
    _with_stderr(best, "decay_rate", rate,
                 None if k_err is None or kappa == 0 else 0.5 * k_err / np.sqrt(abs(kappa)))
    if kappa > 0:
        _with_stderr(best, "T2star", float(kappa**-0.5),
                     None if k_err is None else 0.5 * k_err * kappa**-1.5)
    else:
        best.derived["T2star"] = float("inf")
    return best


def fit_stretched_exp(t, y, weights=None) -> FitResult:
    """V exp(-(t/T2H)^gamma); guesses from log-log linear regression."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 8:
        raise ValueError("need at least 8 points")
    V0 = float(y[np.argmin(t)]) if t.min() <= 0 else float(np.max(y))
    V0 = V0 if V0 > 0 else float(np.max(np.abs(y)))
    mask = (t > 0) & (y > 0.05 * V0) & (y < 0.95 * V0)
    if mask.sum() >= 2:
        lx = np.log(t[mask])
        ly = np.log(-np.log(y[mask] / V0))
        g0, c0 = np.polyfit(lx, ly, 1)
        T0 = float(np.exp(-c0 / g0)) if g0 > 0 else float(np.median(t))
        g0 = float(np.clip(g0, 0.3, 4))
    else:
        g0, T0 = 1.0, float(np.median(t))
    return fit(STRETCHED_EXP, t, y, (V0, T0, g0), weights, 8)


def fit_exponential(t, y, weights=None) -> FitResult:
    """A exp(-t/T1) + B (energy relaxation)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 6:
        raise ValueError("need at least 6 points")
    B0 = float(y[np.argmax(t)])
    A0 = float(y[np.argmin(t)] - B0)
    half = np.argmin(np.abs(y - (B0 + A0 / np.e)))
    T0 = float(max(t[half] - t.min(), (t.max() - t.min()) / 10))
    return fit(EXP_DECAY, t, y, (A0, T0, B0), weights, 6)


def rb_fidelity(p: float) -> float:
    """Average primitive-gate fidelity from the per-Clifford depolarizing parameter."""
    return 1 - (1 - p) / (2 * RB_GATES_PER_CLIFFORD)


def fit_rb(m, F, weights=None) -> FitResult:
    """F(m) = V p^m plus the derived primitive-gate fidelity."""
    m = np.asarray(m, dtype=float)
    F = np.asarray(F, dtype=float)
    if np.unique(m).size < 4:
        raise ValueError("need at least 4 sequence lengths")
    pos = F > 0
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(m[pos], np.log(F[pos]), 1)
        p0, V0 = float(np.exp(slope)), float(np.exp(icpt))
    else:
        p0, V0 = 0.99, 1.0
    res = fit(RB_DECAY, m, F, (V0, p0), weights)
    p = res.params["p"]
    if not 0 < p <= 1 + 1e-12:
        res.converged = False
        res.stderrs = {}
        res.message = f"depolarizing parameter p = {p:.6g} outside (0, 1]"
    _with_stderr(res, "fidelity", rb_fidelity(p),
                 res.stderrs["p"] / (2 * RB_GATES_PER_CLIFFORD) if res.stderrs else None)
    return res


def fit_sinusoid(t, y, weights=None) -> FitResult:
    """V sin(pi t J_off) (residual exchange oscillation)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 6:
        raise ValueError("need at least 6 points")
    f0, _ = _fft_peak(t, y)
    span = t.max() - t.min()
    best = None
    for J0 in {2 * f0, 0.5 / span, 1.0 / span}:
        s = np.sin(np.pi * t * J0)
        V0 = float(s @ y / max(s @ s, 1e-300))
        r = fit(SINUSOID, t, y, (V0, J0), weights, 6)
        if best is None or (r.converged and r.residual_norm < best.residual_norm):
            best = r
    V, err = best.params["V"], best.stderrs.get("V")
    if best.converged and (err is None or abs(V) <= 3 * err or np.isclose(V, 0, atol=1e-12)):
        best.converged = False
        best.stderrs = {}
        best.message = "oscillation amplitude consistent with zero: J_off not identifiable"
    if best.params["J_off"] < 0:
        best.params["J_off"] *= -1
        best.params["V"] *= -1
    return best


def fit_gaussian_peak(x, y, weights=None) -> FitResult:
    """A exp(-(x-x0)^2 / 2 w^2) + B (spectroscopy line)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 6:
        raise ValueError("need at least 6 points")
    B0 = float(np.min(y))
    k = int(np.argmax(y))
    A0 = float(y[k] - B0)
    above = x[y > B0 + A0 / 2]
    w0 = float(max((above.max() - above.min()) / 2.355, np.diff(np.sort(x)).min()))
    res = fit(GAUSSIAN_PEAK, x, y, (A0, float(x[k]), w0, B0), weights, 6)
    res.params["width"] = abs(res.params["width"])
    return res


# --- IO --------------------------------------------------------------------

def read_xy_csv(path) -> tuple:
    """Two- or three-column CSV (x, y[, weight]); a non-numeric first row is a header."""
    xs, ys, ws = [], [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if len(vals) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 2 or 3 columns")
            xs.append(vals[0])
            ys.append(vals[1])
            ws.append(vals[2] if len(vals) == 3 else 1.0)
    return np.array(xs), np.array(ys), np.array(ws)


FITTERS = {
    "gaussian_decay": fit_gaussian_decay,
    "stretched_exp": fit_stretched_exp,
    "exponential": fit_exponential,
    "rb": fit_rb,
    "sinusoid": fit_sinusoid,
    "gaussian_peak": fit_gaussian_peak,
}


def fit_file(kind: str, path) -> FitResult:
    x, y, w = read_xy_csv(path)
    return FITTERS[kind](x, y, w)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinqec import fitkit
from spinqec.fitkit import (
    EXP_DECAY, GAUSSIAN_DECAY, GAUSSIAN_PEAK, RB_DECAY, SINUSOID, STRETCHED_EXP, fit_exponential,
    fit_gaussian_decay, fit_gaussian_peak, fit_rb, fit_sinusoid, fit_stretched_exp,
    numeric_jacobian, rb_fidelity,
)

T_RAMSEY = np.linspace(0, 4e-6, 101)
T_ECHO = np.linspace(0, 120e-6, 60)
M_RB = np.array([1, 5, 10, 20, 40, 70, 100, 150, 200])
T_SIN = np.linspace(0, 4e-6, 60)
X_PEAK = np.linspace(-3e6, 3e6, 61)

# (fitter, model, x, true params, recovered names)
CASES = {
    "gaussian_decay": (fit_gaussian_decay, GAUSSIAN_DECAY, T_RAMSEY,
                       (0.45, (1 / 1.8e-6) ** 2, 2e6, 0.3, 0.5), ("A", "kappa", "df", "phi", "B")),
    "stretched_exp": (fit_stretched_exp, STRETCHED_EXP, T_ECHO, (0.9, 43e-6, 1.83),
                      ("V", "T2H", "gamma")),
    "exponential": (fit_exponential, EXP_DECAY, np.linspace(0, 80e-3, 40), (0.8, 22e-3, 0.1),
                    ("A", "T1", "B")),
    "rb": (fit_rb, RB_DECAY, M_RB, (0.95, 0.99), ("V", "p")),
    "sinusoid": (fit_sinusoid, SINUSOID, T_SIN, (0.8, 0.2e6), ("V", "J_off")),
    "gaussian_peak": (fit_gaussian_peak, GAUSSIAN_PEAK, X_PEAK, (0.9, 0.4e6, 0.5e6, 0.05),
                      ("A", "x0", "width", "B")),
}


@pytest.mark.parametrize("name", CASES)
def test_exact_on_noiseless_data(name):
    fitter, model, x, true, names = CASES[name]
    res = fitter(x, model(x, true))
    assert res.converged
    assert res.residual_norm < 1e-9
    for n, v in zip(names, true):
        assert res.params[n] == pytest.approx(v, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("name", CASES)
def test_analytic_jacobians(name):
    _, model, x, true, _ = CASES[name]
    ana = model.jac(np.asarray(x, dtype=float), *true)
    num = numeric_jacobian(model, x, true)
    scale = np.abs(ana).max(axis=0)
    assert np.all(np.abs(ana - num).max(axis=0) / scale < 1e-5)


@pytest.mark.parametrize("name", CASES)
def test_deterministic(name):
    fitter, model, x, true, _ = CASES[name]
    y = model(x, true) + 0.05 * np.random.default_rng(3).normal(size=len(x))
    a, b = fitter(x, y), fitter(x, y)
    assert a.params == b.params and a.stderrs == b.stderrs


def test_gaussian_decay_examples():
    y = GAUSSIAN_DECAY(T_RAMSEY, (0.5, (1 / 1.8e-6) ** 2, 2e6, 0.0, 0.5))
    res = fit_gaussian_decay(T_RAMSEY, y)
    assert res.derived["T2star"] == pytest.approx(1.8e-6, rel=1e-3)
    assert res.params["df"] == pytest.approx(2e6, rel=1e-3)
    flat = GAUSSIAN_DECAY(T_RAMSEY, (0.5, 0.0, 2e6, 0.0, 0.5))
    flat = flat + 0.01 * np.random.default_rng(0).normal(size=flat.size)
    res = fit_gaussian_decay(T_RAMSEY, flat)
    assert abs(res.derived["decay_rate"]) < 3 * res.derived["decay_rate_stderr"] + 1e3


def test_gaussian_decay_folds_aliases():
    fitter, model, x, true, _ = CASES["gaussian_decay"]
    y = model(x, true) + 0.05 * np.ptp(model(x, true)) * np.random.default_rng(27).normal(size=len(x))
    assert fitter(x, y).params["df"] == pytest.approx(2e6, rel=0.02)


def test_stretched_reduces_to_exponential():
    y = np.exp(-T_ECHO / 30e-6)
    res = fit_stretched_exp(T_ECHO, y)
    assert res.params["gamma"] == pytest.approx(1, rel=1e-6)
    assert res.params["T2H"] == pytest.approx(30e-6, rel=1e-6)


def test_stretched_coverage():
    hits = 0
    for seed in range(50):
        y = STRETCHED_EXP(T_ECHO, (0.9, 43e-6, 1.83)) + 0.02 * np.random.default_rng(seed).normal(size=T_ECHO.size)
        r = fit_stretched_exp(T_ECHO, y)
        hits += abs(r.params["gamma"] - 1.83) <= r.stderrs["gamma"]
    assert hits >= 0.6 * 50


def test_rb_formula():
    assert rb_fidelity(0.99) == pytest.approx(0.997333333, abs=1e-9)
    assert rb_fidelity(1.0) == 1.0
    res = fit_rb(M_RB, RB_DECAY(M_RB, (1.0, 0.99)))
    assert res.derived["fidelity"] == pytest.approx(0.9973333333, abs=1e-9)
    with pytest.raises(ValueError):
        fit_rb([1, 2, 3], [1, 0.9, 0.8])


def test_sinusoid_zero_amplitude_flagged():
    y = 0.01 * np.random.default_rng(1).normal(size=T_SIN.size)
    res = fit_sinusoid(T_SIN, y)
    assert not res.converged and "not identifiable" in res.message


def test_decoupled_cz_decay():
    t = np.linspace(0, 10e-6, 120)
    y = GAUSSIAN_DECAY(t, (0.5, (1 / 3.27e-6) ** 2, 0.4e6, 0.0, 0.5))
    y = y + 0.01 * np.random.default_rng(2).normal(size=t.size)
    res = fit_gaussian_decay(t, y)
    assert res.derived["T2star"] == pytest.approx(3.27e-6, rel=0.03)


@pytest.mark.parametrize("name", ["gaussian_decay", "stretched_exp", "rb", "sinusoid"])
def test_stderr_scales_inverse_sqrt_n(name):
    fitter, model, x, true, names = CASES[name]
    x4 = np.linspace(x.min(), x.max(), 4 * len(x))
    if name == "rb":
        x, x4 = np.repeat(x, 10), np.repeat(x, 40)
    errs = []
    for xs in (x, x4):
        e = []
        for seed in range(20):
            y = model(xs, true) + 0.02 * np.random.default_rng(seed).normal(size=len(xs))
            e.append(fitter(xs, y).stderrs[names[1]])
        errs.append(np.mean(e))
    assert errs[0] / errs[1] == pytest.approx(2, rel=0.15)


def test_minimum_points():
    with pytest.raises(ValueError):
        fit_gaussian_decay(T_RAMSEY[:5], T_RAMSEY[:5])
    with pytest.raises(ValueError):
        fit_sinusoid(T_SIN[:4], T_SIN[:4])


def test_fit_file(tmp_path):
    x = T_SIN
    y = SINUSOID(x, (0.8, 0.2e6))
    path = tmp_path / "d.csv"
    path.write_text("x,y\n" + "".join(f"{a},{b}\n" for a, b in zip(x.tolist(), y.tolist())))
    res = fitkit.fit_file("sinusoid", path)
    assert res.params["J_off"] == pytest.approx(0.2e6, rel=1e-6)
    assert '"J_off"' in res.to_text()
    np.testing.assert_allclose(res.predict(x), y, atol=1e-9)


@settings(max_examples=25)
@given(st.floats(0.3, 3.0), st.floats(0.5, 4.0))
def test_gaussian_decay_recovery_property(t2_us, df_mhz):
    true = (0.45, (1 / (t2_us * 1e-6)) ** 2, df_mhz * 1e6, 0.0, 0.5)
    t = np.linspace(0, 3 * t2_us * 1e-6, 150)
    res = fit_gaussian_decay(t, GAUSSIAN_DECAY(t, true))
    assert res.derived["T2star"] == pytest.approx(t2_us * 1e-6, rel=1e-4)

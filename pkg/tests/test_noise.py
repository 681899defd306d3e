import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinqec.noise import (
    NoiseModel, QubitNoise, ShotRecord, amplitude_damping, coherent_z, flip_probability,
    mean_flip_probability, phase_flip_channel, quasistatic_sigma, readout_confusion,
    sample_quasistatic_detunings, sample_shots,
)
from spinqec.qcore import DOWN, I2, SZ, UP, KrausChannel, apply_channel
from spinqec.tomo import chi_from_kraus, readout_invert

PLUS = np.outer(DOWN + UP, DOWN + UP) / 2


def test_phase_flip_limits():
    assert np.allclose(chi_from_kraus(phase_flip_channel(0))[0, 0], 1)
    assert np.allclose(apply_channel(PLUS, phase_flip_channel(1)).elements, SZ @ PLUS @ SZ)
    assert apply_channel(PLUS, phase_flip_channel(0.25)).elements[0, 1] == pytest.approx(0.25)
    with pytest.raises(ValueError):
        phase_flip_channel(1.2)


@pytest.mark.parametrize("theta, p", [(np.pi, 1.0), (np.pi / 2, 0.5), (0.0, 0.0)])
def test_coherent_z_flip_probability(theta, p):
    assert flip_probability(theta) == pytest.approx(p)
    chi = chi_from_kraus(KrausChannel.unitary(coherent_z(theta)))
    assert chi[0, 0].real == pytest.approx(np.cos(theta / 2) ** 2)


def test_amplitude_damping():
    up = np.outer(UP, UP)
    assert np.allclose(apply_channel(up, amplitude_damping(1.0, 0.0)).elements, up)
    assert apply_channel(up, amplitude_damping(1.0, 50.0)).elements[0, 0].real == pytest.approx(1)
    assert apply_channel(up, amplitude_damping(2.0, 2.0)).elements[1, 1].real == pytest.approx(np.exp(-1))


def test_quasistatic_ramsey_matches_gaussian():
    T2 = 1.8e-6
    rng = np.random.default_rng(7)
    df = sample_quasistatic_detunings([T2], rng, size=100_000)[:, 0]
    for t in (0.5e-6, 1.8e-6, 3e-6):
        c = np.cos(2 * np.pi * df * t)
        err = c.std() / np.sqrt(c.size)
        assert abs(c.mean() - np.exp(-(t / T2) ** 2)) < 3 * err + 1e-12


def test_quasistatic_sigma_and_determinism():
    assert quasistatic_sigma(0.9e-6) == pytest.approx(2 * quasistatic_sigma(1.8e-6))
    a = sample_quasistatic_detunings([1e-6] * 3, np.random.default_rng(3))
    b = sample_quasistatic_detunings([1e-6] * 3, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert mean_flip_probability(0.0, 1e-6) == 0.0


def test_readout_confusion_examples():
    assert np.allclose(readout_confusion([(1, 1)] * 3), np.eye(8))
    c = readout_confusion([(0.95, 0.90)])
    assert (c @ np.array([0, 1]))[1] == pytest.approx(0.90)


@given(st.lists(st.tuples(st.floats(0.55, 1), st.floats(0.55, 1)), min_size=3, max_size=3),
       st.integers(0, 2**31))
def test_confusion_stochastic_and_invertible(fids, seed):
    c = readout_confusion(fids)
    assert np.allclose(c.sum(axis=0), 1, atol=1e-15)
    p = np.random.default_rng(seed).dirichlet(np.ones(8))
    assert np.allclose(readout_invert(c @ p, fids), p, atol=1e-10)


def test_sample_shots():
    rng = np.random.default_rng(0)
    assert sample_shots([1] + [0] * 7, 100, rng).counts == (100,) + (0,) * 7
    rec = sample_shots(np.full(8, 1 / 8), 8000, rng)
    sigma = np.sqrt(8000 / 8 * 7 / 8)
    assert all(abs(c - 1000) < 5 * sigma for c in rec.counts)
    a = sample_shots(np.full(8, 1 / 8), 50, np.random.default_rng(9))
    b = sample_shots(np.full(8, 1 / 8), 50, np.random.default_rng(9))
    assert a == b
    with pytest.raises(ValueError):
        sample_shots([0.5, 0.4], 10, rng)
    with pytest.raises(ValueError):
        sample_shots([1.0], 0, rng)


def test_shot_record_invariant():
    with pytest.raises(ValueError):
        ShotRecord((1, 2), 4)


@given(st.floats(0, 1), st.floats(0, 2 * np.pi), st.floats(1e-7, 1e-5))
def test_generated_channels_trace_preserving(p, theta, t):
    for ch in (phase_flip_channel(p), KrausChannel.unitary(coherent_z(theta)),
               amplitude_damping(1e-5, t)):
        s = sum(k.elements.conj().T @ k.elements for k in ch.operators)
        assert np.allclose(s, I2, atol=1e-10)


@given(st.floats(0, 1))
def test_phase_flip_is_mixture_of_z_rotations(p):
    rng = np.random.default_rng(0)
    rho = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = rho @ rho.conj().T
    rho /= np.trace(rho)
    z0, zpi = coherent_z(0).elements, coherent_z(np.pi).elements
    mix = (1 - p) * z0 @ rho @ z0.conj().T + p * zpi @ rho @ zpi.conj().T
    assert np.allclose(apply_channel(rho, phase_flip_channel(p)).elements, mix, atol=1e-12)


def test_idle_window_at_zero_is_identity():
    nm = NoiseModel(placement="idle_window", t_w=0.0)
    ch = nm.qubit_channel(1, 0.0)
    assert np.allclose(chi_from_kraus(ch)[0, 0], 1)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(placement="somewhere")
    with pytest.raises(ValueError):
        QubitNoise(p_flip=-0.1)
    with pytest.raises(ValueError):
        NoiseModel(readout=((1.2, 1.0),) * 3)

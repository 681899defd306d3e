"""Acceptance checks. Each test prints one PASS/FAIL line (run with -s, or see
the summary section at the end of the session) and then asserts."""

import time

import numpy as np

from spinqec import expcli, fitkit, noise, pulsesim, qec, tomo
from spinqec.circuits import Circuit, execute
from spinqec.noise import NoiseModel
from spinqec.qcore import (
    DOWN, SX, UP, KrausChannel, ghz_state, random_density, random_unitary, state_fidelity,
)

P_GRID = np.linspace(0, 1, 11)
J = 4.5e6


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.s = time.perf_counter() - self.t0


def k3(a, b, c):
    return np.kron(np.kron(a, b), c)


# --- 1 ----------------------------------------------------------------------

def test_corrected_polynomial(report):
    with Clock() as c:
        F = np.array([qec.run_qec(qec.QecRun(NoiseModel.uniform(p_flip=p))).fidelity for p in P_GRID])
    err = float(np.max(np.abs(F - qec.analytic_corrected_fidelity(P_GRID))))
    ok = err < 1e-9 and c.s < 1.0
    assert report(1, ok, f"max |F - (1-3p^2+2p^3)| = {err:.1e} over 11 points", c.s)


# --- 2 ----------------------------------------------------------------------

def test_coherent_equivalence(report):
    thetas = np.linspace(0, np.pi, 11)
    with Clock() as c:
        diffs = []
        for th in thetas:
            p = noise.flip_probability(th)
            coh = qec.run_qec(qec.QecRun(NoiseModel.uniform(theta_z=th), estimator="linear")).chi
            sto = qec.run_qec(qec.QecRun(NoiseModel.uniform(p_flip=p), estimator="linear")).chi
            diffs.append(abs(coh[0, 0] - sto[0, 0]))
            diffs.append(abs(coh[0, 0].real - qec.analytic_corrected_fidelity(p)))
    err = float(max(diffs))
    assert report(2, err < 1e-9, f"max |chi_00(Z(theta)) - chi_00(p = sin^2(theta/2))| = {err:.1e}", c.s)


# --- 3 ----------------------------------------------------------------------

def test_single_location(report):
    thetas = np.concatenate([np.linspace(0, 2 * np.pi, 13), np.random.default_rng(3).uniform(0, 2 * np.pi, 7)])
    with Clock() as c:
        corr, unc = [], []
        for th in thetas:
            for q in (1, 2, 3):
                corr.append(qec.run_qec(qec.QecRun(qec.single_error_noise(q, th))).fidelity)
            u = qec.run_qec(qec.QecRun(qec.single_error_noise(2, th), apply_correction=False)).fidelity
            unc.append(u - np.cos(th / 2) ** 2)
    e1 = float(np.max(np.abs(np.array(corr) - 1)))
    e2 = float(np.max(np.abs(unc)))
    ok = e1 < 1e-9 and e2 < 1e-9
    assert report(3, ok, f"corrected |F-1| <= {e1:.1e}; uncorrected Q2 |F-cos^2| <= {e2:.1e}", c.s)


# --- 4 ----------------------------------------------------------------------

PLUS = (DOWN + UP) / np.sqrt(2)
MINUS = (DOWN - UP) / np.sqrt(2)


def _stage(stage, qubit, theta, psi):
    nm = qec.single_error_noise(qubit, theta) if qubit else NoiseModel()
    enc = qec.encode_circuit()
    circ = {"encoded": enc.with_slot(), "error": enc.with_slot(),
            "decoded": Circuit(3, (enc + qec.decode_circuit()).ops, len(enc.ops)),
            "corrected": qec.qec_circuit(True)}[stage]
    return execute(circ, k3(DOWN, psi, DOWN), nm)


def _ledger_rows(theta, a=0.6, b=0.8j):
    """Expected (stage, qubit) -> state vector, with c = cos(theta/2), s = -i sin(theta/2)."""
    psi = a * DOWN + b * UP
    fl = SX @ psi
    c, s = np.cos(theta / 2), -1j * np.sin(theta / 2)
    rows = {("encoded", 0): a * k3(PLUS, PLUS, PLUS) + b * k3(MINUS, MINUS, MINUS)}
    for q in (1, 2, 3):
        sp = [MINUS if i == q - 1 else PLUS for i in range(3)]
        sm = [PLUS if i == q - 1 else MINUS for i in range(3)]
        rows[("error", q)] = (a * (c * k3(PLUS, PLUS, PLUS) + s * k3(*sp))
                              + b * (c * k3(MINUS, MINUS, MINUS) + s * k3(*sm)))
    rows[("decoded", 1)] = c * k3(DOWN, psi, DOWN) + s * k3(UP, psi, DOWN)
    rows[("decoded", 2)] = c * k3(DOWN, psi, DOWN) + s * k3(UP, fl, UP)
    rows[("decoded", 3)] = c * k3(DOWN, psi, DOWN) + s * k3(DOWN, psi, UP)
    rows[("corrected", 1)] = c * k3(UP, psi, UP) + s * k3(DOWN, psi, UP)
    rows[("corrected", 2)] = c * k3(UP, psi, UP) + 1j * s * k3(DOWN, psi, DOWN)
    rows[("corrected", 3)] = c * k3(UP, psi, UP) + s * k3(UP, psi, DOWN)
    return psi, rows


def test_syndrome_ledger(report):
    with Clock() as c:
        worst = 0.0
        for theta in (0.3, 1.1, np.pi / 2, 2.5, np.pi):
            psi, rows = _ledger_rows(theta)
            for (stage, q), vec in rows.items():
                rho = _stage(stage, q, theta, psi).elements
                vec = vec / np.linalg.norm(vec)
                worst = max(worst, abs(np.real(vec.conj() @ rho @ vec) - 1))
        # syndromes of full-pi errors, and no error
        syn = 0.0
        for q, err in ((0, "none"), (1, "Q1"), (2, "Q2"), (3, "Q3")):
            nm = qec.single_error_noise(q, np.pi) if q else NoiseModel()
            anc = qec.run_qec(qec.QecRun(nm, input_state=psi)).ancilla_probabilities
            syn = max(syn, abs(anc[qec.ANCILLA_LABELS.index(qec.syndrome_of(err))] - 1))
    ok = worst < 1e-9 and syn < 1e-9
    assert report(4, ok, f"ledger rows max infidelity {worst:.1e}; syndrome mass deficit {syn:.1e}", c.s)


# --- 5 ----------------------------------------------------------------------

def test_itoffoli_pulse_physics(report):
    dev = pulsesim.DeviceParams(J12=J, J23=J)
    det = np.linspace(-3e6, 12e6, 61)
    expect = {"dd": 0.0, "du": J, "ud": J, "uu": 2 * J}
    with Clock() as c:
        offs = {}
        for cs in pulsesim.CONTROL_STATES:
            y = np.array([v for _, v in pulsesim.spectroscopy_scan(dev, cs, det)])
            offs[cs] = fitkit.fit_gaussian_peak(det, y).params["x0"] - expect[cs]
        # populations do not depend on the idle-phase calibration
        _, t_mw = pulsesim.itoffoli_drive(J)
        cal = pulsesim.ItoffoliCalibration(pulsesim.theoretical_t_tot(J), 0.0, t_mw)
        tab = pulsesim.population_transfer_table(pulsesim.itoffoli_pulse(dev, J, cal).elements)
        fid = pulsesim.population_transfer_fidelity(tab)
        leak = max(1 - tab[i, i] for i in (1, 3, 4, 6))
    peak = max(abs(v) for v in offs.values())
    ok = peak < 0.05e6 and fid >= 0.97 and leak < 1e-3 and c.s < 30
    assert report(5, ok, f"peak offset {peak / 1e6:.2e} MHz; transfer fidelity {fid:.4f}; "
                         f"Delta=J transfer {leak:.1e}", c.s)


# --- 6 ----------------------------------------------------------------------

def test_calibration(report):
    with Clock() as c:
        cal = pulsesim.calibrate_itoffoli(pulsesim.DeviceParams(), J)
    perr = float(np.max(np.abs(pulsesim.phase_error(cal.conditional_phases))))
    rel = abs(cal.t_tot / 473e-9 - 1)
    ok = perr < 0.05 * np.pi and rel < 0.10
    assert report(6, ok, f"max phase error {perr / np.pi:.1e} pi; t_tot = {cal.t_tot * 1e9:.1f} ns "
                         f"({rel:.1%} from 473 ns)", c.s)


# --- 7 ----------------------------------------------------------------------

def test_dephasing_mitigation(report):
    tw = np.linspace(0, 6e-6, 61)
    with Clock() as c:
        res = qec.dephasing_experiment(tw, T2star=1.8e-6, shots=10_000, seed=0)
        phys = qec.dephasing_experiment(tw, T2star=1.8e-6, shots=10_000, mode="physical", seed=0)
        c1, _ = qec.first_order_coefficient(res)
        c1_phys, _ = qec.first_order_coefficient(phys)
    ana = qec.analytic_dephasing_fidelity(tw, 1.8e-6)
    z = np.abs(res.fidelity - ana) / (res.stderr + 1e-12)
    within = bool(np.all(np.abs(res.fidelity - ana) <= 3 * res.stderr + 1e-12))
    gauss = (1 + np.exp(-(tw / 1.8e-6) ** 2)) / 2
    phys_ok = bool(np.all(np.abs(phys.fidelity - gauss) <= 3 * phys.stderr + 1e-12))
    final = float(res.fidelity[-1])
    ok = within and phys_ok and abs(final - 0.5) <= 0.02 and abs(c1) < 1e-3 and c.s < 300
    assert report(7, ok, f"max |MC - analytic|/sigma = {np.max(z):.2f}; F(6 us) = {final:.4f}; "
                         f"c1 corrected {c1:.1e}, physical {c1_phys:.3f}", c.s)


# --- 8 ----------------------------------------------------------------------

def test_tomography_roundtrip(report):
    rng = np.random.default_rng(2024)
    with Clock() as c:
        fids = []
        for k in range(20):
            if k < 10:
                v = random_unitary(8, rng)[:, 0]
                rho = np.outer(v, v.conj())
            else:
                rho = random_density(8, rng, rank=int(rng.integers(2, 9)))
            est = tomo.state_mle(tomo.forward_probabilities(rho))
            fids.append(state_fidelity(est, rho))
        channels = {
            "identity": KrausChannel.unitary(np.eye(2)),
            "Z(pi/2)": KrausChannel.unitary(noise.coherent_z(np.pi / 2).elements),
            "dephasing": noise.phase_flip_channel(0.5),
        }
        chi_err = 0.0
        for ch in channels.values():
            chi = tomo.chi_from_kraus(ch)
            est = tomo.process_mle(tomo.process_probabilities(chi))
            chi_err = max(chi_err, abs(tomo.process_fidelity(est) - chi[0, 0].real))
        ro_err = 0.0
        for _ in range(20):
            f = [tuple(rng.uniform(0.6, 1.0, 2)) for _ in range(3)]
            P = rng.dirichlet(np.ones(8))
            ro_err = max(ro_err, float(np.max(np.abs(tomo.readout_invert(noise.readout_confusion(f) @ P, f) - P))))
    ok = min(fids) >= 0.999 and chi_err < 0.01 and ro_err < 1e-10
    assert report(8, ok, f"min state fidelity {min(fids):.6f}; chi_00 error {chi_err:.1e}; "
                         f"readout round trip {ro_err:.1e}", c.s)


# --- 9 ----------------------------------------------------------------------

T_RAMSEY = np.linspace(0, 4e-6, 101)
FIT_CASES = {
    "gaussian_decay": (fitkit.fit_gaussian_decay, fitkit.GAUSSIAN_DECAY, T_RAMSEY,
                       (0.45, (1 / 1.8e-6) ** 2, 2e6, 0.3, 0.5)),
    "stretched_exp": (fitkit.fit_stretched_exp, fitkit.STRETCHED_EXP, np.linspace(0, 120e-6, 60),
                      (0.9, 43e-6, 1.83)),
    "exponential": (fitkit.fit_exponential, fitkit.EXP_DECAY, np.linspace(0, 80e-3, 40), (0.8, 22e-3, 0.1)),
    "rb": (fitkit.fit_rb, fitkit.RB_DECAY, np.array([1, 5, 10, 20, 40, 70, 100, 150, 200]), (0.95, 0.99)),
    "sinusoid": (fitkit.fit_sinusoid, fitkit.SINUSOID, np.linspace(0, 4e-6, 60), (0.8, 0.2e6)),
    "gaussian_peak": (fitkit.fit_gaussian_peak, fitkit.GAUSSIAN_PEAK, np.linspace(-3e6, 3e6, 61),
                      (0.9, 0.4e6, 0.5e6, 0.05)),
}


def test_fit_recovery(report):
    with Clock() as c:
        worst, where = 0.0, ""
        rb_fids = []
        for name, (fitter, model, x, true) in FIT_CASES.items():
            clean = model(x, true)
            sigma = 0.05 * np.ptp(clean)
            est = []
            for seed in range(100):
                r = fitter(x, clean + sigma * np.random.default_rng(seed).normal(size=x.size))
                est.append([r.params[n] for n in model.names])
                if name == "rb":
                    rb_fids.append(r.derived["fidelity"])
            rel = np.abs(np.mean(est, axis=0) / np.array(true) - 1)
            if rel.max() > worst:
                worst, where = float(rel.max()), f"{name}.{model.names[int(np.argmax(rel))]}"
        formula = fitkit.rb_fidelity(0.99)
        rb_rel = abs(np.mean(rb_fids) / formula - 1)
    ok = worst < 0.02 and abs(formula - 0.997333) < 5e-7 and rb_rel < 0.02
    assert report(9, ok, f"worst mean relative error {worst:.2%} ({where}); "
                         f"RB formula at p = 0.99 -> {formula:.6f}", c.s)


# --- 10 ---------------------------------------------------------------------

def _configs(tmp_path):
    counts = tmp_path / "counts.csv"
    rng = np.random.default_rng(0)
    tomo.write_counts_csv(counts, expcli._sample_state_counts(ghz_state(0).density(), 300,
                                                              expcli._readout(1.0), rng))
    return {
        "ghz": "[ghz]\n",
        "spectroscopy": "[spectroscopy]\nn_points = 61\n",
        "itoffoli-truthtable": "[itoffoli-truthtable]\ndt_ns = 0.5\nshots = 500\nreadout_fidelity = 0.97\n",
        "itoffoli-calibrate": "[itoffoli-calibrate]\ndt_ns = 0.5\n",
        "qec-single": "[qec-single]\nn_theta = 4\nshots = 300\nreadout_fidelity = 0.95\n",
        "qec-uniform": "[qec-uniform]\nn_p = 4\nerror_type = coherent\nshots = 300\n",
        "qec-dephasing": "[qec-dephasing]\nn_tw = 8\nshots = 1000\n",
        "coherence": "[coherence]\nn_points = 40\n",
        "rb": "[rb]\nn_sequences = 5\nshots = 100\n",
        "tomo-ingest": f"[tomo-ingest]\ncounts_file = {counts}\n",
    }


def test_determinism(report, tmp_path):
    with Clock() as c:
        bad = []
        n_files = 0
        for name, cfg in _configs(tmp_path).items():
            params = expcli.parse_config(name, cfg)
            outs = []
            for rep in "ab":
                d = tmp_path / name / rep
                expcli.run(name, params, 17, d, plots=False)
                outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
            n_files += len(outs[0])
            if outs[0] != outs[1] or not outs[0]:
                bad.append(name)
    assert set(expcli.SCENARIOS) == set(_configs(tmp_path))
    ok = not bad
    assert report(10, ok, f"{len(expcli.SCENARIOS)} scenarios, {n_files} CSV files compared; "
                          f"differing: {bad or 'none'}", c.s)

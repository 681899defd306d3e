"""Command-line runner: ``spinqec <scenario> --config FILE --seed N --out DIR``.

A config is an INI file with at most one section, named after the scenario.
Keys are checked against the scenario schema below; anything unknown is an
error. Outputs are CSV tables (the contract), SVG renderings, and
``manifest.json`` listing every file with its sha256.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, circuits, fitkit, noise, pulsesim, qec, tomo
from .qcore import ghz_state, state_fidelity

log = logging.getLogger("spinqec")

MANIFEST = "manifest.json"


class ConfigError(ValueError):
    pass


# --- config schema ---------------------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(v) for v in s.replace(",", " ").split())


@dataclass(frozen=True)
class Key:
    parse: Callable
    default: object
    choices: tuple = ()
    check: Callable | None = None


def _pos(x):
    return x > 0


def _prob(x):
    return 0 <= x <= 1


def _fid(x):
    return 0.5 < x <= 1


SCHEMAS: dict[str, dict[str, Key]] = {
    "ghz": {
        "n_phi": Key(int, 9, check=_pos),
        "decouple": Key(_bool, False),
        "shots": Key(int, 0, check=lambda v: v >= 0),
        "readout_fidelity": Key(float, 1.0, check=_fid),
        "p_flip": Key(float, 0.0, check=_prob),
    },
    "spectroscopy": {
        "J_mhz": Key(float, 4.5, check=_pos),
        "start_mhz": Key(float, -3.0),
        "stop_mhz": Key(float, 12.0),
        "n_points": Key(int, 151, check=lambda v: v >= 8),
        "dt_ns": Key(float, 1.0, check=_pos),
    },
    "itoffoli-truthtable": {
        "J_mhz": Key(float, 4.5, check=_pos),
        "dt_ns": Key(float, 0.1, check=_pos),
        "drive_scale": Key(float, 1.0, check=_pos),
        "shots": Key(int, 0, check=lambda v: v >= 0),
        "readout_fidelity": Key(float, 1.0, check=_fid),
    },
    "itoffoli-calibrate": {
        "J_mhz": Key(float, 4.5, check=_pos),
        "dt_ns": Key(float, 0.1, check=_pos),
    },
    "qec-single": {
        "error_qubits": Key(_ints, (1, 2, 3), check=lambda v: len(v) > 0 and set(v) <= {1, 2, 3}),
        "n_theta": Key(int, 13, check=lambda v: v >= 2),
        "gate_level": Key(str, "ideal", choices=qec.GATE_LEVELS),
        "shots": Key(int, 0, check=lambda v: v >= 0),
        "readout_fidelity": Key(float, 1.0, check=_fid),
    },
    "qec-uniform": {
        "error_type": Key(str, "stochastic", choices=("stochastic", "coherent")),
        "n_p": Key(int, 11, check=lambda v: v >= 2),
        "gate_level": Key(str, "ideal", choices=qec.GATE_LEVELS),
        "shots": Key(int, 0, check=lambda v: v >= 0),
        "readout_fidelity": Key(float, 1.0, check=_fid),
    },
    "qec-dephasing": {
        "T2star_us": Key(float, 1.8, check=_pos),
        "tw_max_us": Key(float, 6.0, check=_pos),
        "n_tw": Key(int, 31, check=lambda v: v >= 2),
        "shots": Key(int, 10_000, check=_pos),
        "recalibrate_every": Key(int, 0, check=lambda v: v >= 0),
    },
    "coherence": {
        "T2star_us": Key(float, 1.8, check=_pos),
        "detuning_mhz": Key(float, 2.0, check=_pos),
        "T2H_us": Key(float, 43.0, check=_pos),
        "gamma": Key(float, 1.83, check=_pos),
        "T1_ms": Key(float, 22.0, check=_pos),
        "J_off_mhz": Key(float, 0.2, check=_pos),
        "noise": Key(float, 0.02, check=lambda v: v >= 0),
        "n_points": Key(int, 101, check=lambda v: v >= 8),
    },
    "rb": {
        "lengths": Key(_ints, (1, 5, 10, 20, 40, 70, 100, 150, 200), check=lambda v: len(v) >= 4 and min(v) >= 1),
        "n_sequences": Key(int, 30, check=_pos),
        "depolarizing": Key(float, 0.003, check=_prob),
        "shots": Key(int, 0, check=lambda v: v >= 0),
    },
    "tomo-ingest": {
        "counts_file": Key(str, ""),
        "readout_fidelity": Key(float, 1.0, check=_fid),
        "target_phi": Key(float, 0.0),
    },
}

# scenarios whose output depends on the seed
STOCHASTIC = {"coherence", "rb", "qec-dephasing", "tomo-ingest"}


def _is_stochastic(name: str, params: dict) -> bool:
    return name in STOCHASTIC or params.get("shots", 0) > 0


def parse_config(name: str, text: str | None) -> dict:
    """Validated parameter dict for ``name`` (defaults filled in)."""
    if name not in SCHEMAS:
        raise ConfigError(f"unknown scenario {name!r}")
    schema = SCHEMAS[name]
    params = {k: v.default for k, v in schema.items()}
    if not text:
        return params
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    extra = [s for s in cp.sections() if s != name]
    if extra:
        raise ConfigError(f"unexpected section(s) {extra}; only [{name}] is allowed")
    if name not in cp:
        return params
    for key, raw in cp[name].items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        spec = schema[key]
        try:
            val = spec.parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        if spec.choices and val not in spec.choices:
            raise ConfigError(f"{key} must be one of {spec.choices}, got {val!r}")
        if spec.check and not spec.check(val):
            raise ConfigError(f"{key}: value {raw!r} out of range")
        params[key] = val
    return params


def config_hash(name: str, params: dict) -> str:
    canon = json.dumps({"scenario": name, "params": params}, sort_keys=True, default=list)
    return hashlib.sha256(canon.encode()).hexdigest()


# --- output ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".15g")
    return str(v)


@dataclass
class Outputs:
    tables: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)
    texts: dict = field(default_factory=dict)

    def table(self, name: str, header: list, rows: list) -> None:
        self.tables[name] = (header, rows)

    def plot(self, name: str, series: list, xlabel: str, ylabel: str) -> None:
        """``series`` items are (label, x, y[, style])."""
        self.plots.append((name, series, xlabel, ylabel))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _render_svg(path: Path, series, xlabel, ylabel) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "spinqec"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for item in series:
        label, x, y = item[:3]
        style = item[3] if len(item) > 3 else "-"
        ax.plot(x, y, style, label=label, ms=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _prepare_dir(out: Path) -> None:
    """Create ``out``; leftovers of an earlier run (per its manifest) are removed."""
    out.mkdir(parents=True, exist_ok=True)
    existing = {p.name for p in out.iterdir()}
    if not existing:
        return
    if MANIFEST not in existing:
        raise ConfigError(f"output directory {out} is not empty and has no manifest")
    old = json.loads((out / MANIFEST).read_text())
    listed = {f["name"] for f in old.get("files", [])} | {MANIFEST}
    stray = existing - listed
    if stray:
        raise ConfigError(f"output directory {out} has unlisted files: {sorted(stray)}")
    for name in listed:
        (out / name).unlink(missing_ok=True)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(out: Path, outputs: Outputs, name: str, params: dict, seed,
                  wall: float, plots: bool = True) -> dict:
    _prepare_dir(out)
    files = []
    for fname, (header, rows) in sorted(outputs.tables.items()):
        (out / fname).write_text(_csv_text(header, rows))
        files.append(fname)
    for fname, text in sorted(outputs.texts.items()):
        (out / fname).write_text(text)
        files.append(fname)
    if plots:
        for pname, series, xl, yl in outputs.plots:
            _render_svg(out / pname, series, xl, yl)
            files.append(pname)
    manifest = {
        "scenario": name,
        "config_hash": config_hash(name, params),
        "params": params,
        "seed": seed,
        "version": __version__,
        "files": [{"name": f, "sha256": _sha256(out / f)} for f in sorted(files)],
        "wall_time_s": round(wall, 3),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, default=list) + "\n")
    return manifest


# --- scenarios ---------------------------------------------------------------

def _readout(f: float, n: int = 3):
    return [(f, f)] * n


def _sample_state_counts(rho, shots: int, readout, rng) -> np.ndarray:
    probs = tomo.forward_probabilities(rho)
    conf = noise.readout_confusion(readout)
    return np.array([noise.sample_shots(np.clip(conf @ p, 0, None) / np.clip(conf @ p, 0, None).sum(),
                                        shots, rng).counts for p in probs])


def reconstruct_counts(counts: np.ndarray, readout, seed: int = 0):
    """Readout-inverted frequencies -> MLE density matrix."""
    freqs = counts / counts.sum(axis=1, keepdims=True)
    probs = np.array([tomo.readout_invert(f, readout) for f in freqs])
    return tomo.state_mle(probs, seed=seed)


def scenario_ghz(p: dict, seed, out: Outputs) -> None:
    rng = np.random.default_rng(seed)
    ro = _readout(p["readout_fidelity"])
    nm = noise.NoiseModel(qubits=(noise.QubitNoise(p["p_flip"]),) * 3, placement="per_gate") \
        if p["p_flip"] > 0 else None
    rows, phis, fids = [], np.linspace(0, 2 * np.pi, p["n_phi"]), []
    for k, phi in enumerate(phis):
        rho = circuits.execute(circuits.ghz_circuit(phi, p["decouple"]), np.eye(8)[0], nm)
        if p["shots"]:
            counts = _sample_state_counts(rho, p["shots"], ro, rng)
            buf = io.StringIO()
            tomo.write_counts(buf, counts)
            out.texts[f"ghz_counts_{k:02d}.csv"] = buf.getvalue()
            rho = reconstruct_counts(counts, ro)
        f = state_fidelity(rho, ghz_state(phi))
        fids.append(f)
        rows.append([phi, f, tomo.ghz_witness(min(max(f, 0.0), 1.0))])
    out.table("ghz.csv", ["phi", "fidelity", "witness"], rows)
    out.plot("ghz.svg", [("fidelity", phis, fids, "o-"), ("GHZ bound", phis, [0.75] * len(phis), "--")],
             "phi (rad)", "GHZ fidelity")


def scenario_spectroscopy(p: dict, seed, out: Outputs) -> None:
    J = p["J_mhz"] * 1e6
    dev = pulsesim.DeviceParams(J12=J, J23=J)
    det = np.linspace(p["start_mhz"], p["stop_mhz"], p["n_points"]) * 1e6
    expected = {"dd": 0.0, "du": J, "ud": J, "uu": 2 * J}
    rows, peaks, series = [], [], []
    for cs in pulsesim.CONTROL_STATES:
        trace = pulsesim.spectroscopy_scan(dev, cs, det, dt=p["dt_ns"] * 1e-9)
        x = np.array([d for d, _ in trace])
        y = np.array([v for _, v in trace])
        rows += [[cs, d, v] for d, v in trace]
        series.append((cs, x / 1e6, y))
        win = np.abs(x - expected[cs]) < 1.5e6
        if win.sum() < 6:
            raise ConfigError(f"fewer than 6 scan points within 1.5 MHz of the {cs} peak; "
                              "raise n_points or narrow the range")
        fr = fitkit.fit_gaussian_peak(x[win], y[win])
        peaks.append([cs, fr.params["x0"], fr.stderrs.get("x0", float("nan")), expected[cs],
                      fr.params["x0"] - expected[cs]])
    out.table("spectroscopy.csv", ["control_state", "detuning_hz", "p_up"], rows)
    out.table("spectroscopy_peaks.csv",
              ["control_state", "center_hz", "center_stderr_hz", "expected_hz", "offset_hz"], peaks)
    out.plot("spectroscopy.svg", series, "detuning (MHz)", "Q2 spin-up probability")


def _calibrated(p: dict):
    J = p["J_mhz"] * 1e6
    dt = p["dt_ns"] * 1e-9
    return pulsesim.DeviceParams(), J, dt, qec.pulse_calibration(J, dt)


def scenario_itoffoli_calibrate(p: dict, seed, out: Outputs) -> None:
    dev, J, dt, cal = _calibrated(p)
    ph = cal.conditional_phases
    out.table("calibration.csv",
              ["t_tot_ns", "delta_t_ns", "t_mw_ns", "t_tot_theory_ns", "virtual_phase",
               "phase_dd_pi", "phase_ud_pi", "phase_du_pi", "phase_uu_pi", "max_error_pi"],
              [[cal.t_tot * 1e9, cal.delta_t * 1e9, cal.t_mw * 1e9,
                pulsesim.theoretical_t_tot(J) * 1e9, cal.virtual_phase,
                *[x / np.pi for x in ph], cal.residual / np.pi]])
    out.texts["itoffoli_schedule.txt"] = pulsesim.dumps_schedule(pulsesim.itoffoli_schedule(dev, J, cal))


def scenario_itoffoli_truthtable(p: dict, seed, out: Outputs) -> None:
    dev, J, dt, cal = _calibrated(p)
    u = pulsesim.itoffoli_pulse(dev, J, cal, dt, p["drive_scale"]).elements
    table = pulsesim.population_transfer_table(u)
    if p["shots"]:
        rng = np.random.default_rng(seed)
        ro = _readout(p["readout_fidelity"])
        conf = noise.readout_confusion(ro)
        meas = np.array([noise.sample_shots(conf @ row, p["shots"], rng).frequencies() for row in table])
        table = np.array([tomo.readout_invert(row, ro) for row in meas])
    tt = tomo.truthtable_mle(table)
    labels = [f"{i:03b}".replace("0", "d").replace("1", "u") for i in range(8)]
    rows = [[labels[i], labels[j], tt.table[i, j]] for i in range(8) for j in range(8)]
    out.table("truthtable.csv", ["input", "output", "probability"], rows)
    out.table("truthtable_summary.csv", ["population_transfer_fidelity", "t_tot_ns", "shots"],
              [[tomo.population_transfer_fidelity(tt), cal.t_tot * 1e9, p["shots"]]])


def _qec_rows(results, sweep, corrected, extra) -> list:
    return [[s, r.fidelity, 0.0 if stderr is None else stderr, int(corrected), *e]
            for s, (r, stderr), e in zip(sweep, results, extra)]


def scenario_qec_single(p: dict, seed, out: Outputs) -> None:
    thetas = np.linspace(0, 2 * np.pi, p["n_theta"])
    ro = _readout(p["readout_fidelity"])
    rows, synd, series = [], [], []
    for q in p["error_qubits"]:
        for corrected in (True, False):
            fs = []
            for k, th in enumerate(thetas):
                nm = qec.single_error_noise(q, th)
                nm = noise.NoiseModel(nm.qubits, tuple(ro))
                run = qec.QecRun(nm, gate_level=p["gate_level"], apply_correction=corrected,
                                 shots=p["shots"] or None, seed=None if seed is None else seed + k)
                r = qec.run_qec(run)
                fs.append(r.fidelity)
                ideal = 1.0 if corrected or q != 2 else np.cos(th / 2) ** 2
                rows.append([th, r.fidelity, 0.0, int(corrected), q, ideal])
                if corrected:
                    synd.append([q, th, *r.ancilla_probabilities])
            series.append((f"Q{q} {'corr' if corrected else 'uncorr'}", thetas, fs, "o-"))
    out.table("qec_single.csv",
              ["sweep_parameter", "fidelity", "stderr", "corrected_flag", "error_qubit", "analytic"], rows)
    out.table("qec_single_syndromes.csv",
              ["error_qubit", "theta", *[f"P_{a}" for a in qec.ANCILLA_LABELS]], synd)
    out.plot("qec_single.svg", series, "theta (rad)", "process fidelity")


def scenario_qec_uniform(p: dict, seed, out: Outputs) -> None:
    ps = np.linspace(0, 1, p["n_p"])
    ro = _readout(p["readout_fidelity"])
    rows, series = [], []
    for corrected in (True, False):
        fs = []
        for k, pv in enumerate(ps):
            if p["error_type"] == "coherent":
                nm = noise.NoiseModel.uniform(theta_z=2 * np.arcsin(np.sqrt(pv)), readout=tuple(ro))
            else:
                nm = noise.NoiseModel.uniform(p_flip=pv, readout=tuple(ro))
            run = qec.QecRun(nm, gate_level=p["gate_level"], apply_correction=corrected,
                             shots=p["shots"] or None, seed=None if seed is None else seed + k)
            r = qec.run_qec(run)
            fs.append(r.fidelity)
            an = qec.analytic_corrected_fidelity(pv) if corrected else qec.analytic_uncorrected_fidelity(pv)
            rows.append([pv, r.fidelity, 0.0, int(corrected), an])
        series.append(("corrected" if corrected else "uncorrected", ps, fs, "o"))
    series.append(("1-3p^2+2p^3", ps, qec.analytic_corrected_fidelity(ps), "-"))
    out.table("qec_uniform.csv", ["sweep_parameter", "fidelity", "stderr", "corrected_flag", "analytic"], rows)
    out.plot("qec_uniform.svg", series, "p", "process fidelity")


def scenario_qec_dephasing(p: dict, seed, out: Outputs) -> None:
    t2 = p["T2star_us"] * 1e-6
    tw = np.linspace(0, p["tw_max_us"] * 1e-6, p["n_tw"])
    rows, series, fits = [], [], []
    for mode in qec.DEPHASING_MODES:
        res = qec.dephasing_experiment(tw, t2, p["shots"], mode, seed=seed,
                                       recalibrate_every=p["recalibrate_every"] or None)
        an = qec.analytic_dephasing_fidelity(tw, t2, mode)
        for t, f, e, pb, a in zip(tw, res.fidelity, res.stderr, res.p_bar, an):
            rows.append([t, f, e, int(mode == "corrected"), mode, pb, a])
        series.append((mode, tw * 1e6, res.fidelity, "o"))
        c1, c1_err = qec.first_order_coefficient(res)
        fits.append([mode, c1, c1_err, res.fidelity[-1]])
    series.append(("analytic corrected", tw * 1e6, qec.analytic_dephasing_fidelity(tw, t2), "-"))
    out.table("qec_dephasing.csv",
              ["sweep_parameter", "fidelity", "stderr", "corrected_flag", "mode", "p_bar", "analytic"], rows)
    out.table("qec_dephasing_fit.csv", ["mode", "first_order_coefficient", "stderr", "final_fidelity"], fits)
    out.plot("qec_dephasing.svg", series, "t_w (us)", "data fidelity")


def scenario_coherence(p: dict, seed, out: Outputs) -> None:
    rng = np.random.default_rng(seed)
    n, sd = p["n_points"], p["noise"]
    t2, df = p["T2star_us"] * 1e-6, p["detuning_mhz"] * 1e6
    t2h, g, t1, joff = p["T2H_us"] * 1e-6, p["gamma"], p["T1_ms"] * 1e-3, p["J_off_mhz"] * 1e6
    sets = {
        "ramsey": (np.linspace(0, 3 * t2, n), lambda t: 0.5 * np.exp(-(t / t2) ** 2) * np.cos(2 * np.pi * df * t) + 0.5,
                   fitkit.fit_gaussian_decay, {"T2star": t2, "df": df}),
        "hahn": (np.linspace(0, 2.5 * t2h, n), lambda t: np.exp(-(t / t2h) ** g),
                 fitkit.fit_stretched_exp, {"T2H": t2h, "gamma": g}),
        "t1": (np.linspace(0, 4 * t1, n), lambda t: np.exp(-t / t1),
               fitkit.fit_exponential, {"T1": t1}),
        "residual_exchange": (np.linspace(0, 0.5 / joff, n), lambda t: np.sin(np.pi * t * joff),
                              fitkit.fit_sinusoid, {"J_off": joff}),
    }
    data_rows, fit_rows = [], []
    for name, (x, f, fitter, truth) in sets.items():
        y = f(x) + sd * rng.normal(size=x.size)
        data_rows += [[name, a, b] for a, b in zip(x, y)]
        res = fitter(x, y)
        vals = {**res.params, **res.derived}
        for key, true in truth.items():
            err = res.stderrs.get(key, res.derived.get(key + "_stderr", float("nan")))
            fit_rows.append([name, key, vals[key], err, true, int(res.converged)])
        out.plot(f"coherence_{name}.svg", [("data", x, y, "o"), ("fit", x, res.predict(x), "-")], "time (s)", "signal")
    out.table("coherence_data.csv", ["experiment", "x", "y"], data_rows)
    out.table("coherence_fits.csv", ["experiment", "parameter", "value", "stderr", "injected", "converged"], fit_rows)


def scenario_rb(p: dict, seed, out: Outputs) -> None:
    d = p["depolarizing"]
    rng = np.random.default_rng(seed)
    rows, ms, fs = [], [], []
    for m in p["lengths"]:
        sa = circuits.rb_sequences(m, p["n_sequences"], rng)
        sb = circuits.rb_sequences(m, p["n_sequences"], rng, final_x=True)
        pa = np.array([circuits.simulate_rb_survival(s, d) for s in sa])
        pb = np.array([circuits.simulate_rb_survival(s, d) for s in sb])
        if p["shots"]:
            pa = rng.binomial(p["shots"], pa) / p["shots"]
            pb = rng.binomial(p["shots"], pb) / p["shots"]
        F = pb.mean() - pa.mean()
        rows.append([m, pa.mean(), pb.mean(), F])
        ms.append(m)
        fs.append(F)
    res = fitkit.fit_rb(np.array(ms), np.array(fs))
    lam = 1 - d
    p_true = float(np.mean([lam ** len(s) for s in circuits.CLIFFORD_TABLE]))
    out.table("rb.csv", ["m", "P_up_A", "P_up_B", "F"], rows)
    out.table("rb_fit.csv", ["V", "p", "p_stderr", "fidelity", "fidelity_stderr", "p_injected", "fidelity_injected"],
              [[res.params["V"], res.params["p"], res.stderrs.get("p", float("nan")),
                res.derived["fidelity"], res.derived.get("fidelity_stderr", float("nan")),
                p_true, fitkit.rb_fidelity(p_true)]])
    out.plot("rb.svg", [("data", ms, fs, "o"), ("fit", ms, res.predict(np.array(ms)), "-")],
             "number of Cliffords m", "F(m)")


def ingest_counts(path) -> np.ndarray:
    """Counts array (64, 8) from a count file, validated with line-numbered errors."""
    _, counts = tomo.read_counts_csv(path)
    return counts


def scenario_tomo_ingest(p: dict, seed, out: Outputs) -> None:
    if not p["counts_file"]:
        raise ConfigError("tomo-ingest needs counts_file")
    counts = ingest_counts(p["counts_file"])
    ro = _readout(p["readout_fidelity"])
    rho = reconstruct_counts(counts, ro, seed=seed or 0)
    f = state_fidelity(rho, ghz_state(p["target_phi"]))
    out.texts["density_matrix.json"] = tomo.matrix_to_json(rho) + "\n"
    out.table("tomo_summary.csv", ["ghz_fidelity", "purity", "witness", "total_shots"],
              [[f, rho.purity(), tomo.ghz_witness(min(max(f, 0.0), 1.0)), int(counts.sum())]])


SCENARIOS = {
    "ghz": scenario_ghz,
    "spectroscopy": scenario_spectroscopy,
    "itoffoli-truthtable": scenario_itoffoli_truthtable,
    "itoffoli-calibrate": scenario_itoffoli_calibrate,
    "qec-single": scenario_qec_single,
    "qec-uniform": scenario_qec_uniform,
    "qec-dephasing": scenario_qec_dephasing,
    "coherence": scenario_coherence,
    "rb": scenario_rb,
    "tomo-ingest": scenario_tomo_ingest,
}


def run(name: str, params: dict, seed, out_dir, plots: bool = True) -> dict:
    """Execute one scenario and write its artifacts; returns the manifest."""
    if _is_stochastic(name, params) and seed is None:
        raise ConfigError(f"scenario {name!r} is stochastic with these settings and needs --seed")
    t0 = time.perf_counter()
    outputs = Outputs()
    SCENARIOS[name](params, seed, outputs)
    return write_outputs(Path(out_dir), outputs, name, params, seed, time.perf_counter() - t0, plots)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinqec", description="Run a spin-qubit QEC simulation scenario.")
    ap.add_argument("scenario", choices=sorted(SCENARIOS))
    ap.add_argument("--config", type=Path, help="INI file with a [<scenario>] section")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--dry-run", action="store_true", help="validate the config and exit")
    ap.add_argument("--no-plots", action="store_true")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _fail(kind: str, msg: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": msg}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text() if args.config else None
    except OSError as exc:
        return _fail("config", str(exc), 2)
    try:
        params = parse_config(args.scenario, text)
        if args.dry_run:
            if _is_stochastic(args.scenario, params) and args.seed is None:
                raise ConfigError(f"scenario {args.scenario!r} needs --seed")
            print(json.dumps({"status": "ok", "scenario": args.scenario, "params": params,
                              "config_hash": config_hash(args.scenario, params)}, default=list))
            return 0
        manifest = run(args.scenario, params, args.seed, args.out, plots=not args.no_plots)
    except ConfigError as exc:
        return _fail("config", str(exc), 2)
    except ValueError as exc:
        return _fail("input", str(exc), 3)
    except RuntimeError as exc:
        return _fail("runtime", str(exc), 4)
    print(json.dumps({"status": "ok", "out": str(args.out), "files": len(manifest["files"]),
                      "wall_time_s": manifest["wall_time_s"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())

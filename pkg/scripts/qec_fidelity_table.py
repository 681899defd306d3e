"""Corrected vs uncorrected process fidelity under uniform phase flips.

Prints the ideal-gate simulation next to 1 - 3p^2 + 2p^3, and optionally the
pulse-level iToffoli run (calibration takes ~10 s).
"""

import argparse

import numpy as np

from spinqec import qec
from spinqec.noise import NoiseModel


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=11)
    ap.add_argument("--pulse", action="store_true", help="add a pulse-level column")
    ap.add_argument("--coherent", action="store_true", help="Z(theta) with p = sin^2(theta/2)")
    args = ap.parse_args()

    head = f"{'p':>6} {'corrected':>10} {'analytic':>10} {'uncorr':>8}"
    print(head + (f" {'pulse':>8}" if args.pulse else ""))
    for p in np.linspace(0, 1, args.n):
        nm = (NoiseModel.uniform(theta_z=2 * np.arcsin(np.sqrt(p))) if args.coherent
              else NoiseModel.uniform(p_flip=p))
        f = qec.run_qec(qec.QecRun(nm)).fidelity
        u = qec.run_qec(qec.QecRun(nm, apply_correction=False)).fidelity
        line = f"{p:6.2f} {f:10.6f} {qec.analytic_corrected_fidelity(p):10.6f} {u:8.4f}"
        if args.pulse:
            line += f" {qec.run_qec(qec.QecRun(nm, gate_level='pulse')).fidelity:8.4f}"
        print(line)


if __name__ == "__main__":
    main()

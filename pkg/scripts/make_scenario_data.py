"""Regenerate the synthetic data files bundled with the scenarios."""
import math
from pathlib import Path

import numpy as np

from optisense import GaussianMixture, Multitone, cp_sequence, sensitivity
from optisense.noise import synthetic_decay, write_decays_csv, DecayCurve

OUT = Path(__file__).resolve().parents[1] / "src" / "optisense" / "scenarios"
TWO_PI = 2 * math.pi

# two-component spectrum used for the spectroscopy closed loop
SPECTRO = GaussianMixture([2.0e4, 1.0e4], [TWO_PI * 40e3, TWO_PI * 100e3],
                          [TWO_PI * 10e3, TWO_PI * 15e3])


def decay_curves(spec, nus_hz, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    curves = []
    for nu in nus_hz:
        tau = 1.0 / (2.0 * nu)
        t2 = math.pi ** 2 / (4.0 * max(float(spec(math.pi / tau)), 1e-30))
        counts = np.unique(np.rint(np.linspace(0.15, 2.5, 10) * t2 / tau).astype(int))
        counts = counts[counts >= 2]
        c = synthetic_decay(spec, tau, counts)
        s = np.clip(c.signals + noise * rng.standard_normal(c.signals.size), 0.0, 1.0)
        curves.append(DecayCurve(c.tau, c.times, s))
    return curves


def measured_E(C0=4.2, noise=0.02, seed=3):
    spec = GaussianMixture([3.0e4], [TWO_PI * 25e3], [TWO_PI * 3e3])
    field = Multitone.single(20.5e3)
    rng = np.random.default_rng(seed)
    rows = []
    for T in np.arange(150e-6, 251e-6, 2e-6):
        eta = sensitivity(cp_sequence(8, T / 8), field, spec).eta
        rows.append((T, C0 / eta * (1 + noise * rng.standard_normal())))
    return rows


if __name__ == "__main__":
    nus = np.linspace(15e3, 140e3, 26)
    write_decays_csv(decay_curves(SPECTRO, nus, noise=0.002, seed=11), OUT / "decays.csv")
    with open(OUT / "measured.csv", "w") as fh:
        fh.write("T_s,E\n")
        for T, E in measured_E():
            fh.write(f"{T:.12g},{E:.12g}\n")

"""
Phase accumulation, readout signal, Fisher information and sensitivity.

Units: field amplitude in uT, gyromagnetic ratio in Hz/uT, times in s. The
accumulated phase per unit amplitude ``phi`` is in rad/uT, which needs the
explicit cycles-to-radians factor ``PHASE_CONVENTION = 2 pi``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .control import PulseSequence
from .errors import ArgumentError, CalibrationError, DegenerateOutcomeError
from .noise import coherence_chi

__all__ = [
    "NV_GYROMAGNETIC_RATIO",
    "PHASE_CONVENTION",
    "SensorParams",
    "SensitivityReport",
    "Calibration",
    "accumulated_phase",
    "phase_from_running_mean",
    "signal",
    "signal_slope",
    "fisher_per_shot",
    "fisher_at_optimal_bias",
    "sensitivity",
    "sensitivity_from",
    "min_detectable_field",
    "calibrate_c",
    "predict_E",
    "write_reports_csv",
    "REPORT_HEADER",
]

NV_GYROMAGNETIC_RATIO = 2.81e4  # Hz/uT
PHASE_CONVENTION = 2.0 * math.pi  # rad per cycle


@dataclass(frozen=True)
class SensorParams:
    gamma_hz_per_ut: float = NV_GYROMAGNETIC_RATIO
    kappa: float = PHASE_CONVENTION

    def __post_init__(self):
        if not self.gamma_hz_per_ut > 0:
            raise ArgumentError("gyromagnetic ratio must be positive")

    @property
    def coupling(self) -> float:
        """kappa * gamma, in rad / (uT s)."""
        return self.kappa * self.gamma_hz_per_ut


@dataclass(frozen=True)
class SensitivityReport:
    """Figures of merit for one (sequence, field, spectrum) triple.

    ``fisher_per_shot`` is evaluated at the optimal bias point (s = 1/2).
    """

    T: float
    phi: float
    chi: float
    eta: float
    fisher_per_shot: float
    signal_slope_max: float

    @property
    def eta_is_infinite(self) -> bool:
        return math.isinf(self.eta)


def accumulated_phase(seq: PulseSequence, model, params: SensorParams = SensorParams()) -> float:
    """Phase per unit amplitude ``kappa gamma int_0^T f(t) y(t) dt`` (rad/uT).

    Summed segment by segment from the closed-form field integrals; this is
    the regrouped form of ``(-1)^n F(T) T - 2 sum_j (-1)^j F(t_j) t_j``
    (see :func:`phase_from_running_mean`) and avoids the cancellation between
    large running integrals when the net phase is small.
    """
    e = seq.edges
    seg = model.integral(e[:-1], e[1:])
    return params.coupling * float(np.dot(seq.signs, seg))


def phase_from_running_mean(seq: PulseSequence, model, params: SensorParams = SensorParams()) -> float:
    """Same phase as :func:`accumulated_phase`, via the running mean F(t)."""
    n = seq.n
    T = seq.total_time
    tj = seq.pulse_times
    j = np.arange(1, n + 1)
    Ft = model.mean(tj) * tj if n else np.zeros(0)
    total = (-1) ** n * float(model.mean(T)) * T - 2.0 * float(np.dot((-1.0) ** j, Ft))
    return params.coupling * total


def signal(seq, model, spec, b: float, params: SensorParams = SensorParams(), *,
           chi: float | None = None, phi: float | None = None) -> float:
    """Readout probability ``(1 + exp(-chi) cos(phi b)) / 2``."""
    chi = coherence_chi(seq, spec) if chi is None else chi
    phi = accumulated_phase(seq, model, params) if phi is None else phi
    return 0.5 * (1.0 + math.exp(-chi) * math.cos(phi * b))


def signal_slope(seq, model, spec, b: float, params: SensorParams = SensorParams(), *,
                 chi: float | None = None, phi: float | None = None) -> float:
    """Analytic derivative of :func:`signal` with respect to ``b`` (1/uT)."""
    chi = coherence_chi(seq, spec) if chi is None else chi
    phi = accumulated_phase(seq, model, params) if phi is None else phi
    return -0.5 * math.exp(-chi) * phi * math.sin(phi * b)


def fisher_per_shot(seq, model, spec, b: float, params: SensorParams = SensorParams(), *,
                    chi: float | None = None, phi: float | None = None) -> float:
    """Fisher information of one binary projective readout (1/uT^2).

    Raises
    ------
    DegenerateOutcomeError
        If the outcome probability is exactly 0 or 1.
    """
    chi = coherence_chi(seq, spec) if chi is None else chi
    phi = accumulated_phase(seq, model, params) if phi is None else phi
    s = signal(seq, model, spec, b, params, chi=chi, phi=phi)
    var = s * (1.0 - s)
    if var <= 0.0:
        raise DegenerateOutcomeError(f"outcome probability s={s!r} is degenerate")
    ds = signal_slope(seq, model, spec, b, params, chi=chi, phi=phi)
    return ds * ds / var


def fisher_at_optimal_bias(chi: float, phi: float) -> float:
    """``exp(-2 chi) phi^2``: the value of :func:`fisher_per_shot` where s = 1/2."""
    return math.exp(-2.0 * chi) * phi * phi


def sensitivity_from(T: float, chi: float, phi: float) -> SensitivityReport:
    """Assemble a report from precomputed chi and phi."""
    aphi = abs(phi)
    eta = math.inf if aphi == 0.0 else math.exp(chi) * math.sqrt(T) / aphi
    return SensitivityReport(
        T=T,
        phi=phi,
        chi=chi,
        eta=eta,
        fisher_per_shot=fisher_at_optimal_bias(chi, phi),
        signal_slope_max=0.5 * math.exp(-chi) * aphi,
    )


def sensitivity(seq, model, spec, params: SensorParams = SensorParams(), *,
                chi: float | None = None) -> SensitivityReport:
    """``eta = exp(chi) sqrt(T) / |phi|`` in uT/sqrt(Hz); infinite when phi is 0."""
    chi = coherence_chi(seq, spec) if chi is None else chi
    phi = accumulated_phase(seq, model, params)
    return sensitivity_from(seq.total_time, chi, phi)


def min_detectable_field(report: SensitivityReport, n_shots: int) -> float:
    """``eta / sqrt(N T)``: smallest amplitude resolvable with N repetitions."""
    if n_shots < 1:
        raise ArgumentError("need at least one shot")
    return report.eta / math.sqrt(n_shots * report.T)


@dataclass(frozen=True)
class Calibration:
    C: float
    dC: float
    E_max: float
    E_max_err: float
    T_peak: float
    eta_min: float


def _peak_fit(T, E, half_window):
    """Quadratic fit around the sample maximum; returns (vertex, value, value_err)."""
    k = int(np.argmax(E))
    if k == 0 or k == len(E) - 1:
        raise CalibrationError("measured E(T) has no interior maximum")
    lo, hi = max(0, k - half_window), min(len(E), k + half_window + 1)
    t, e = T[lo:hi], E[lo:hi]
    if t.size < 3:
        raise CalibrationError("too few points around the maximum to fit a peak")
    t0, ts = T[k], max(np.ptp(t), 1e-300)
    x = (t - t0) / ts
    if t.size >= 5:
        coef, cov = np.polyfit(x, e, 2, cov=True)
    else:
        coef, cov = np.polyfit(x, e, 2), np.zeros((3, 3))
    a, b, c = coef
    if not a < 0:
        raise CalibrationError("measured E(T) is not peaked")
    xv = -b / (2 * a)
    if not (x.min() <= xv <= x.max()):
        raise CalibrationError("fitted peak lies outside the measured range")
    val = c - b * b / (4 * a)
    grad = np.array([b * b / (4 * a * a), -b / (2 * a), 1.0])
    err = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return float(t0 + xv * ts), float(val), err


def calibrate_c(measured: Sequence[tuple], theory: Sequence[tuple], half_window: int = 3) -> Calibration:
    """Calibration constant ``C = E_max * eta_min`` and its fit uncertainty.

    Parameters
    ----------
    measured : sequence of (T, E)
        Measured inverse-sensitivity observable versus sensing time.
    theory : sequence of (T, eta)
        Model sensitivity versus sensing time.
    half_window : int
        Points on each side of the measured maximum used in the peak fit.
    """
    m = np.asarray(measured, dtype=float).reshape(-1, 2)
    th = np.asarray(theory, dtype=float).reshape(-1, 2)
    if m.shape[0] == 0 or th.shape[0] == 0:
        raise ArgumentError("measured and theory lists must be nonempty")
    if th[:, 0].max() < m[:, 0].min() or th[:, 0].min() > m[:, 0].max():
        raise ArgumentError("measured and theory T ranges do not overlap")
    m = m[np.argsort(m[:, 0])]
    T_peak, E_max, E_err = _peak_fit(m[:, 0], m[:, 1], half_window)
    finite = np.isfinite(th[:, 1])
    if not np.any(finite):
        raise CalibrationError("theory sensitivity is infinite everywhere")
    eta_min = float(th[finite, 1].min())
    return Calibration(E_max * eta_min, E_err * eta_min, E_max, E_err, T_peak, eta_min)


def predict_E(cal: Calibration, eta):
    """Predicted observable ``C / eta`` with its lower and upper band."""
    eta = np.asarray(eta, dtype=float)
    return cal.C / eta, (cal.C - cal.dC) / eta, (cal.C + cal.dC) / eta


REPORT_HEADER = ["T_s", "phi_rad_per_uT", "chi", "eta_uT_per_sqrtHz", "fisher_per_uT2"]


def write_reports_csv(reports: Sequence[SensitivityReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow([f"{r.T:.12g}", f"{r.phi:.12g}", f"{r.chi:.12g}",
                        "inf" if math.isinf(r.eta) else f"{r.eta:.12g}",
                        f"{r.fisher_per_shot:.12g}"])

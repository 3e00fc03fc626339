"""
Dephasing-noise spectra, the decoherence functional and CP noise spectroscopy.

Normalization
-------------
``S(omega)`` is the two-sided power spectral density of the phase-rate
noise (units 1/s, coupling already absorbed), evaluated on omega >= 0 and
even in omega. With ``y~`` the Fourier transform of the modulation
function (see :mod:`optisense.control`) the coherence exponent is

    chi = (1 / 2 pi) int_0^inf S(omega) |y~(omega)|^2 d omega,

which equals half the variance of the random phase, so the ensemble
coherence is ``exp(-chi)``. This is the unique constant for which a long CP
train with spacing tau decays at the rate ``(4 / pi^2) S(pi / tau)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.optimize import curve_fit, least_squares
from scipy.signal import find_peaks

from .control import PulseSequence, cp_sequence, fourier_transform
from .errors import ArgumentError, DivergenceError, FitError

__all__ = [
    "GaussianMixture",
    "TabulatedSpectrum",
    "NoiseSpectrum",
    "DecayCurve",
    "DecayFit",
    "SpectrumFit",
    "ChiEvaluator",
    "coherence_chi",
    "spectrum_from_t2",
    "t2_from_spectrum",
    "fit_decay",
    "fit_spectrum_from_decays",
    "synthetic_decay",
    "read_spectrum_csv",
    "write_mixture_csv",
    "read_decays_csv",
    "write_decays_csv",
]

# gaussian components are integrated over center +/- this many widths
SUPPORT_SIGMAS = 7.0
_GL_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


class GaussianMixture:
    """``S(omega) = sum_k A_k exp(-(|omega| - omega_k)^2 / (2 sigma_k^2))``.

    An empty mixture is the zero spectrum.
    """

    def __init__(self, amplitudes=(), centers=(), widths=()):
        A = np.array(amplitudes, dtype=float).reshape(-1)
        c = np.array(centers, dtype=float).reshape(-1)
        s = np.array(widths, dtype=float).reshape(-1)
        if not (A.shape == c.shape == s.shape):
            raise ArgumentError("amplitudes, centers and widths need equal length")
        if np.any(A < 0) or np.any(s <= 0) or not np.all(np.isfinite(np.r_[A, c, s])):
            raise ArgumentError("mixture needs A_k >= 0, sigma_k > 0, all finite")
        for arr in (A, c, s):
            arr.flags.writeable = False
        self.amplitudes, self.centers, self.widths = A, c, s

    @classmethod
    def zero(cls) -> "GaussianMixture":
        return cls()

    @property
    def n_components(self) -> int:
        return int(self.amplitudes.size)

    def __call__(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        if self.n_components == 0:
            return np.zeros_like(w) if w.ndim else 0.0
        d = (w[..., None] - self.centers) / self.widths
        out = np.sum(self.amplitudes * np.exp(-0.5 * d * d), axis=-1)
        return out if w.ndim else float(out)

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(self.amplitudes * factor, self.centers, self.widths)

    def support(self):
        """Merged frequency intervals (rad/s) carrying the spectral weight."""
        keep = self.amplitudes > 0
        iv = sorted(
            (max(0.0, c - SUPPORT_SIGMAS * s), c + SUPPORT_SIGMAS * s)
            for c, s in zip(self.centers[keep], self.widths[keep])
            if c + SUPPORT_SIGMAS * s > 0
        )
        merged = []
        for lo, hi in iv:
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return [tuple(m) for m in merged]

    def min_feature(self) -> float:
        """Smallest frequency scale the quadrature must resolve."""
        keep = self.amplitudes > 0
        return float(self.widths[keep].min()) if np.any(keep) else math.inf

    def knots(self) -> np.ndarray:
        return np.empty(0)

    def __eq__(self, other):
        if not isinstance(other, GaussianMixture):
            return NotImplemented
        return (np.array_equal(self.amplitudes, other.amplitudes)
                and np.array_equal(self.centers, other.centers)
                and np.array_equal(self.widths, other.widths))

    def __repr__(self):
        return f"GaussianMixture(n_components={self.n_components})"


class TabulatedSpectrum:
    """Piecewise-linear ``S`` through ``(omega_i, S_i)``, zero outside the grid."""

    def __init__(self, omega, values):
        w = np.array(omega, dtype=float).reshape(-1)
        v = np.array(values, dtype=float).reshape(-1)
        if w.shape != v.shape or w.size < 2:
            raise ArgumentError("tabulated spectrum needs matching arrays of length >= 2")
        if np.any(np.diff(w) <= 0) or w[0] < 0:
            raise ArgumentError("omega grid must be nonnegative and strictly increasing")
        if np.any(v < 0):
            raise ArgumentError("spectrum values must be nonnegative")
        w.flags.writeable = False
        v.flags.writeable = False
        self.omega, self.values = w, v

    def __call__(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        out = np.interp(w, self.omega, self.values, left=0.0, right=0.0)
        return out if w.ndim else float(out)

    def scaled(self, factor: float) -> "TabulatedSpectrum":
        return TabulatedSpectrum(self.omega, self.values * factor)

    def support(self):
        return [(float(self.omega[0]), float(self.omega[-1]))]

    def min_feature(self) -> float:
        return math.inf

    def knots(self) -> np.ndarray:
        return self.omega

    def __repr__(self):
        return f"TabulatedSpectrum(points={self.omega.size})"


NoiseSpectrum = Union[GaussianMixture, TabulatedSpectrum]


def _quadrature_nodes(spec, total_time: float, level: int):
    """Composite Gauss-Legendre nodes over the spectrum support.

    Panels are at most half a filter lobe (pi / T) wide, and at most half the
    narrowest spectral feature, halved once per refinement level.
    """
    h = min(math.pi / total_time, 0.5 * spec.min_feature()) / 2 ** level
    knots = spec.knots()
    xs, ws = [], []
    for lo, hi in spec.support():
        if hi <= lo:
            continue
        m = max(1, math.ceil((hi - lo) / h))
        br = np.linspace(lo, hi, m + 1)
        if knots.size:
            inner = knots[(knots > lo) & (knots < hi)]
            br = np.union1d(br, inner)
        a, b = br[:-1], br[1:]
        half = 0.5 * (b - a)
        xs.append(((a + b) / 2)[:, None] + half[:, None] * _GL_X)
        ws.append(half[:, None] * _GL_W)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate([x.ravel() for x in xs]), np.concatenate([w.ravel() for w in ws])


def _check_finite(spec, s_nodes):
    s0 = spec(0.0)
    if not math.isfinite(s0) or not np.all(np.isfinite(s_nodes)):
        raise DivergenceError("spectrum is not finite on the integration range")


def _cp_spacing(seq):
    """tau if ``seq`` is Carr-Purcell to rounding, else None."""
    n = seq.n
    if n < 1:
        return None
    tau = seq.total_time / n
    ideal = (np.arange(1, n + 1) - 0.5) * tau
    if np.max(np.abs(seq.pulse_times - ideal)) > 8 * np.finfo(float).eps * seq.total_time:
        return None
    return tau


def _filter_sq(seq, nodes):
    out = np.empty(nodes.size)
    tau = _cp_spacing(seq)
    if tau is not None:
        # closed form: (16 / w^2) sin^4(w tau / 4) [trig(n w tau / 2) / cos(w tau / 2)]^2
        x = 0.5 * nodes * tau
        c = np.cos(x)
        ok = (np.abs(c) > 1e-3) & (nodes * seq.total_time >= 1.0)
        trig = np.sin if seq.n % 2 == 0 else np.cos
        w = nodes[ok]
        r = trig(seq.n * x[ok]) / c[ok]
        out[ok] = 16.0 / (w * w) * np.sin(0.5 * x[ok]) ** 4 * r * r
        if not np.all(ok):
            y = fourier_transform(seq, nodes[~ok])
            out[~ok] = y.real ** 2 + y.imag ** 2
        return out
    # i w y~(w) = sum_k d_k exp(-i w e_k), d = jumps of y including both ends;
    # cheap and accurate once w T is not small
    far = nodes * seq.total_time >= 1.0
    if np.any(far):
        s = seq.signs
        d = np.concatenate([[s[0]], np.diff(s), [-s[-1]]])
        w = nodes[far]
        arg = np.multiply.outer(w, seq.edges)
        c, sn = np.cos(arg) @ d, np.sin(arg) @ d
        out[far] = (c * c + sn * sn) / (w * w)
    if not np.all(far):
        y = fourier_transform(seq, nodes[~far])
        out[~far] = y.real ** 2 + y.imag ** 2
    return out


_CHUNK_ELEMENTS = 1 << 21


def _chi_sum(seq, nodes, weighted_s):
    if nodes.size == 0:
        return 0.0
    step = max(1, _CHUNK_ELEMENTS // (seq.n + 2))
    total = 0.0
    for i in range(0, nodes.size, step):
        total += float(np.dot(weighted_s[i:i + step], _filter_sq(seq, nodes[i:i + step])))
    return total / (2.0 * math.pi)


def coherence_chi(seq: PulseSequence, spec, atol: float = 1e-8, rtol: float = 1e-6,
                  max_level: int = 8) -> float:
    """Coherence exponent chi for a pulse sequence under a noise spectrum.

    The integral is refined by halving the panel width until two successive
    levels agree to ``atol + rtol * |chi|``.

    Raises
    ------
    DivergenceError
        If the spectrum is not finite (including at omega = 0), where the
        unbalanced part of the filter would make chi diverge.
    """
    T = seq.total_time
    prev = None
    for level in range(max_level + 1):
        nodes, weights = _quadrature_nodes(spec, T, level)
        s = spec(nodes)
        _check_finite(spec, s)
        val = _chi_sum(seq, nodes, weights * s)
        if prev is not None and abs(val - prev) <= atol + rtol * abs(val):
            return val
        prev = val
    return prev


class ChiEvaluator:
    """Cached-node evaluator of chi for many sequences no longer than ``max_time``.

    Spectrum values at the nodes are computed once; each call then costs one
    Fourier transform on the node grid. Resolution is that of the first
    refinement level of :func:`coherence_chi` at ``max_time``.
    """

    def __init__(self, spec, max_time: float, level: int = 1):
        if not max_time > 0:
            raise ArgumentError("max_time must be positive")
        self.spec = spec
        self.max_time = float(max_time)
        self.nodes, w = _quadrature_nodes(spec, self.max_time, level)
        s = spec(self.nodes)
        _check_finite(spec, s)
        self._ws = w * s

    def __call__(self, seq: PulseSequence) -> float:
        if seq.total_time > self.max_time * (1 + 1e-9):
            raise ArgumentError(
                f"sequence length {seq.total_time} exceeds evaluator range {self.max_time}")
        return _chi_sum(seq, self.nodes, self._ws)


def spectrum_from_t2(tau: float, t2: float) -> float:
    """``S(pi / tau) = pi^2 / (4 T2)`` from a CP coherence time."""
    if not tau > 0 or not t2 > 0:
        raise ArgumentError("tau and t2 must be positive")
    return math.pi ** 2 / (4.0 * t2)


def t2_from_spectrum(s_value: float) -> float:
    """Inverse of :func:`spectrum_from_t2`; zero noise gives infinite T2."""
    if s_value < 0:
        raise ArgumentError("spectral density must be nonnegative")
    return math.inf if s_value == 0 else math.pi ** 2 / (4.0 * s_value)


@dataclass(frozen=True)
class DecayCurve:
    """CP decay at fixed spacing ``tau``: signal versus total time."""

    tau: float
    times: np.ndarray
    signals: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.signals, dtype=float)
        if not self.tau > 0:
            raise ArgumentError("tau must be positive")
        if t.shape != s.shape or t.ndim != 1:
            raise ArgumentError("times and signals must be matching 1-D arrays")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ArgumentError("times must be positive and increasing")
        if np.any(s < 0) or np.any(s > 1):
            raise ArgumentError("signals must lie in [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "signals", s)

    @property
    def pulse_counts(self) -> np.ndarray:
        return np.rint(self.times / self.tau).astype(int)


@dataclass(frozen=True)
class DecayFit:
    t2: float
    t2_err: float
    residual_norm: float

    def __iter__(self):
        yield self.t2
        yield self.t2_err


def _decay_model(t, rate):
    return 0.5 * (1.0 + np.exp(-rate * t))


def fit_decay(curve: DecayCurve) -> DecayFit:
    """Least-squares fit of ``s(t) = (1 + exp(-t / T2)) / 2``.

    Returns T2, its standard error and the residual norm.
    """
    t, s = curve.times, curve.signals
    if t.size < 4:
        raise ArgumentError("need at least 4 points to fit a decay")
    if np.ptp(s) == 0:
        raise FitError("signal is constant; no decay to fit")
    if np.polyfit(t, s, 1)[0] >= 0:
        raise FitError("signal does not fall with time; no decay to fit")
    # log-linear starting guess from the clearly-above-floor points
    c = 2.0 * s - 1.0
    ok = c > 0.05
    if ok.sum() >= 2:
        slope = np.polyfit(t[ok], np.log(c[ok]), 1)[0]
        r0 = max(-slope, 1e-3 / t.max())
    else:
        r0 = 3.0 / t.max()
    try:
        popt, pcov = curve_fit(_decay_model, t, s, p0=[r0], bounds=(0.0, np.inf))
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"decay fit failed: {exc}") from exc
    rate = float(popt[0])
    if not math.isfinite(rate) or rate <= 1e-6 / t.max():
        raise FitError("fitted decay rate is zero; T2 unbounded")
    if rate > 1e6 / t.min():
        raise FitError("fitted decay is instantaneous; T2 not resolvable")
    rate_err = math.sqrt(pcov[0, 0]) if np.isfinite(pcov[0, 0]) else math.inf
    resid = float(np.linalg.norm(s - _decay_model(t, rate)))
    return DecayFit(1.0 / rate, rate_err / rate ** 2, resid)


@dataclass(frozen=True)
class SpectrumFit:
    """Gaussian-mixture fit to CP spectroscopy points."""

    spectrum: GaussianMixture
    omega: np.ndarray
    S: np.ndarray
    residuals: np.ndarray
    t2: np.ndarray
    t2_err: np.ndarray


def _mixture(p, x):
    A, c, s = p[0::3], p[1::3], p[2::3]
    d = (x[:, None] - c) / s
    return np.sum(A * np.exp(-0.5 * d * d), axis=1)


def fit_spectrum_from_decays(curves: Sequence[DecayCurve], n_components: int,
                             n_starts: int = 16, seed: int = 0) -> SpectrumFit:
    """Estimate a gaussian-mixture spectrum from CP decays at several spacings.

    Each curve is reduced to ``(pi / tau, pi^2 / (4 T2))``, then a mixture
    of ``n_components`` gaussians is fitted by multi-start bounded least
    squares. The first start places centers on the tallest data peaks; the
    rest are drawn at random from ``seed``.
    """
    if int(n_components) != n_components or n_components < 1:
        raise ArgumentError("n_components must be an integer >= 1")
    k = int(n_components)
    taus = sorted({c.tau for c in curves})
    need = max(2 * k + 1, 3 * k)
    if len(taus) < need:
        raise ArgumentError(
            f"{k} components need at least {need} distinct tau values, got {len(taus)}")
    fits = [fit_decay(c) for c in curves]
    omega = np.array([math.pi / c.tau for c in curves])
    S = np.array([spectrum_from_t2(c.tau, f.t2) for c, f in zip(curves, fits)])
    t2 = np.array([f.t2 for f in fits])
    t2_err = np.array([f.t2_err for f in fits])
    order = np.argsort(omega)
    omega, S, t2, t2_err = omega[order], S[order], t2[order], t2_err[order]

    ws, ss = float(omega.max()), float(S.max()) if S.max() > 0 else 1.0
    x, y = omega / ws, S / ss
    lo_c, hi_c = float(x.min()), float(x.max())
    dx = float(np.min(np.diff(x))) if x.size > 1 else 0.1
    span = hi_c - lo_c
    lower = np.tile([0.0, lo_c, dx / 4], k)
    upper = np.tile([np.inf, hi_c, span], k)

    rng = np.random.default_rng(seed)
    starts = []
    peaks, props = find_peaks(np.r_[0.0, y, 0.0], height=0)
    peaks = peaks - 1
    peaks = peaks[np.argsort(props["peak_heights"])[::-1]][:k]
    base = []
    for j in range(k):
        if j < peaks.size:
            base += [y[peaks[j]], x[peaks[j]], max(span / (4 * k), dx)]
        else:
            base += [0.5 * y.max(), rng.uniform(lo_c, hi_c), max(span / (4 * k), dx)]
    starts.append(np.array(base))
    for _ in range(n_starts - 1):
        p = []
        for _j in range(k):
            p += [rng.uniform(0.2, 1.2) * y.max(), rng.uniform(lo_c, hi_c),
                  rng.uniform(max(dx, span / 20), max(dx * 1.01, span / 2))]
        starts.append(np.array(p))

    best = None
    for p0 in starts:
        p0 = np.clip(p0, lower + 1e-12, np.where(np.isfinite(upper), upper - 1e-12, p0))
        try:
            res = least_squares(lambda p: _mixture(p, x) - y, p0, bounds=(lower, upper),
                                x_scale="jac", max_nfev=2000)
        except ValueError:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise FitError("no mixture fit converged")
    p = best.x
    mix = GaussianMixture(p[0::3] * ss, p[1::3] * ws, p[2::3] * ws)
    return SpectrumFit(mix, omega, S, S - mix(omega), t2, t2_err)


def synthetic_decay(spec, tau: float, pulse_counts: Sequence[int]) -> DecayCurve:
    """CP decay predicted by :func:`coherence_chi` for each pulse count."""
    counts = sorted(int(n) for n in pulse_counts)
    sig = [0.5 * (1.0 + math.exp(-coherence_chi(cp_sequence(n, tau), spec))) for n in counts]
    return DecayCurve(tau, np.array(counts) * tau, np.array(sig))


def _read_csv_columns(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        got = [h.strip() for h in next(reader)]
        if got != header:
            raise ArgumentError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
        rows = [[float(v) for v in row] for row in reader if row]
    return np.array(rows, dtype=float).reshape(-1, len(header))


def read_spectrum_csv(path):
    """Load a tabulated (``omega_rad_s,S_per_s``) or mixture spectrum file."""
    with open(path, newline="") as fh:
        first = next(line for line in fh if not line.startswith("#"))
    header = [h.strip() for h in first.strip().split(",")]
    if header == ["omega_rad_s", "S_per_s"]:
        d = _read_csv_columns(path, header)
        return TabulatedSpectrum(d[:, 0], d[:, 1])
    if header == ["A_per_s", "omega0_rad_s", "sigma_rad_s"]:
        d = _read_csv_columns(path, header)
        return GaussianMixture(d[:, 0], d[:, 1], d[:, 2])
    raise ArgumentError(f"{path}: unrecognized spectrum header {first.strip()!r}")


def write_mixture_csv(mix: GaussianMixture, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["A_per_s", "omega0_rad_s", "sigma_rad_s"])
        for row in zip(mix.amplitudes, mix.centers, mix.widths):
            w.writerow([f"{v:.12g}" for v in row])


def read_decays_csv(path):
    """Group rows of a ``tau_s,T_total_s,signal`` file into decay curves."""
    d = _read_csv_columns(path, ["tau_s", "T_total_s", "signal"])
    curves = []
    for tau in np.unique(d[:, 0]):
        rows = d[d[:, 0] == tau]
        rows = rows[np.argsort(rows[:, 1])]
        curves.append(DecayCurve(float(tau), rows[:, 1], rows[:, 2]))
    return curves


def write_decays_csv(curves, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_s", "T_total_s", "signal"])
        for c in curves:
            for t, s in zip(c.times, c.signals):
                w.writerow([f"{c.tau:.12g}", f"{t:.12g}", f"{s:.12g}"])

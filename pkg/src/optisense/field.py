"""
Known temporal profiles f(t) of the target field b(t) = b f(t).

Each model evaluates f(t), its integral over an arbitrary interval, and the
running mean F(t) = (1/t) int_0^t f(t') dt'. Integrals are closed form
(trigonometric for multitone fields, error functions for gaussian pulses,
trapezoidal for tabulated waveforms), which is what makes the phase
computation in :mod:`optisense.sensing` cheap enough to sit inside an
optimizer loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Union

import numpy as np
from scipy.special import erf, erfc

from .errors import ArgumentError, DomainError

__all__ = [
    "Multitone",
    "GaussianTrain",
    "SingleGaussian",
    "Tabulated",
    "FieldModel",
    "eval_field",
    "mean_integral",
    "interval_integral",
    "running_integral",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_PI_2 = math.sqrt(math.pi / 2.0)
# Gaussian terms beyond this many widths are dropped (exp(-32) ~ 1.3e-14).
TRUNCATION_SIGMAS = 8.0


def _as_array(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise DomainError("field evaluated at negative time")
    return arr


def _erf_diff(x, y):
    """erf(x) - erf(y) without cancellation when x and y share a sign."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    out = erf(x) - erf(y)
    pos = (x > 0) & (y > 0)
    neg = (x < 0) & (y < 0)
    out = np.where(pos, erfc(y) - erfc(x), out)
    out = np.where(neg, erfc(-x) - erfc(-y), out)
    return out


@dataclass(frozen=True)
class Multitone:
    """Sum of cosines ``sum_i w_i cos(2 pi nu_i t + alpha_i)``.

    Parameters
    ----------
    weights : sequence of float
        Relative amplitudes, must sum to one.
    freqs_hz : sequence of float
        Tone frequencies in Hz, all positive.
    phases_rad : sequence of float, optional
        Per-tone phases; defaults to zeros.
    """

    weights: tuple
    freqs_hz: tuple
    phases_rad: tuple = None

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        nu = tuple(float(v) for v in self.freqs_hz)
        ph = (0.0,) * len(w) if self.phases_rad is None else tuple(float(v) for v in self.phases_rad)
        if len(w) < 1 or len(w) != len(nu) or len(w) != len(ph):
            raise ArgumentError("weights, freqs_hz and phases_rad need equal nonzero length")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ArgumentError(f"multitone weights must sum to 1, got {math.fsum(w)!r}")
        if any(not v > 0 for v in nu):
            raise ArgumentError("multitone frequencies must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "freqs_hz", nu)
        object.__setattr__(self, "phases_rad", ph)

    @classmethod
    def single(cls, nu_hz: float, alpha: float = 0.0) -> "Multitone":
        return cls((1.0,), (nu_hz,), (alpha,))

    def _params(self):
        w = np.asarray(self.weights)
        om = 2.0 * np.pi * np.asarray(self.freqs_hz)
        al = np.asarray(self.phases_rad)
        return w, om, al

    def shifted(self, alpha: float) -> "Multitone":
        """Return a copy with every tone phase advanced by ``alpha``.

        The shift is reduced modulo 2 pi first, so ``alpha`` and
        ``alpha + 2 pi`` give the same model whenever the reduction is exact.
        """
        shift = float(np.remainder(alpha, 2.0 * np.pi))
        return Multitone(self.weights, self.freqs_hz, tuple(a + shift for a in self.phases_rad))

    def __call__(self, t):
        t = _as_array(t)
        w, om, al = self._params()
        return np.sum(w * np.cos(om * t[..., None] + al), axis=-1)

    def integral(self, a, b):
        a, b = np.broadcast_arrays(_as_array(a), _as_array(b))
        w, om, al = self._params()
        mid = 0.5 * (a + b)[..., None]
        half = 0.5 * (b - a)[..., None]
        # [sin(om b + al) - sin(om a + al)] / om, written without cancellation
        terms = 2.0 * np.cos(om * mid + al) * np.sin(om * half) / om
        return np.sum(w * terms, axis=-1)

    def mean(self, t):
        t = _as_array(t)
        w, om, al = self._params()
        x = t[..., None]
        return np.sum(w * np.cos(om * x / 2.0 + al) * np.sinc(om * x / (2.0 * np.pi)), axis=-1)


@dataclass(frozen=True)
class _GaussianSum:
    """Shared machinery for sums of unit-height gaussians."""

    def _centers(self, lo: float, hi: float) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t):
        t = _as_array(t)
        if t.size == 0:
            return np.zeros_like(t)
        c = self._centers(float(t.min()) - TRUNCATION_SIGMAS * self.sigma_s,
                          float(t.max()) + TRUNCATION_SIGMAS * self.sigma_s)
        if c.size == 0:
            return np.zeros_like(t)
        d = t[..., None] - c
        g = np.exp(-d * d / (2.0 * self.sigma_s ** 2))
        g = np.where(np.abs(d) > TRUNCATION_SIGMAS * self.sigma_s, 0.0, g)
        return g.sum(axis=-1)

    def integral(self, a, b):
        a, b = np.broadcast_arrays(_as_array(a), _as_array(b))
        if a.size == 0:
            return np.zeros_like(a)
        s = self.sigma_s
        lo = float(min(a.min(), b.min())) - TRUNCATION_SIGMAS * s
        hi = float(max(a.max(), b.max())) + TRUNCATION_SIGMAS * s
        c = self._centers(lo, hi)
        if c.size == 0:
            return np.zeros_like(a)
        xa = (a[..., None] - c) / (_SQRT2 * s)
        xb = (b[..., None] - c) / (_SQRT2 * s)
        return s * _SQRT_PI_2 * _erf_diff(xb, xa).sum(axis=-1)

    def mean(self, t):
        t = _as_array(t)
        s = self.sigma_s
        out = self.integral(np.zeros_like(t), t) / np.where(t > 0, t, 1.0)
        # Simpson on very short windows, where the erf difference loses digits
        tiny = t < 1e-3 * s
        if np.any(tiny):
            simpson = (self(np.zeros_like(t)) + 4.0 * self(t / 2.0) + self(t)) / 6.0
            out = np.where(tiny, simpson, out)
        return out


@dataclass(frozen=True)
class GaussianTrain(_GaussianSum):
    """Train ``sum_{i=0}^{reps} exp(-(t - i dt)^2 / (2 sigma^2))``."""

    sigma_s: float
    period_s: float
    reps: int

    def __post_init__(self):
        if not self.sigma_s > 0 or not self.period_s > 0:
            raise ArgumentError("sigma_s and period_s must be positive")
        if int(self.reps) != self.reps or self.reps < 1:
            raise ArgumentError("reps must be an integer >= 1")
        object.__setattr__(self, "reps", int(self.reps))

    def _centers(self, lo, hi):
        i0 = max(0, math.ceil(lo / self.period_s))
        i1 = min(self.reps, math.floor(hi / self.period_s))
        if i1 < i0:
            return np.empty(0)
        return np.arange(i0, i1 + 1) * self.period_s


@dataclass(frozen=True)
class SingleGaussian(_GaussianSum):
    """Single pulse ``exp(-(t - t_G)^2 / (2 sigma^2))``."""

    sigma_s: float
    center_s: float

    def __post_init__(self):
        if not self.sigma_s > 0:
            raise ArgumentError("sigma_s must be positive")

    def _centers(self, lo, hi):
        # a single term; truncation never matters for the integral
        return np.array([self.center_s])

    def with_center(self, center_s: float) -> "SingleGaussian":
        return SingleGaussian(self.sigma_s, center_s)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Uniformly sampled waveform, linearly interpolated.

    Running integrals are cached at the grid points (trapezoid rule, which is
    exact for the interpolant).
    """

    times_s: np.ndarray
    values: np.ndarray
    _cum: np.ndarray = dc_field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=float).copy()
        v = np.asarray(self.values, dtype=float).copy()
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ArgumentError("tabulated field needs matching 1-D arrays of length >= 2")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ArgumentError("sample grid must be strictly increasing")
        if np.max(np.abs(dt - dt.mean())) > 1e-9 * dt.mean():
            raise ArgumentError("sample grid must be uniform")
        if not np.all(np.isfinite(v)):
            raise ArgumentError("tabulated values must be finite")
        t.flags.writeable = False
        v.flags.writeable = False
        cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (v[1:] + v[:-1]))])
        cum.flags.writeable = False
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_cum", cum)

    def _check(self, t):
        if np.any(t < self.times_s[0]) or np.any(t > self.times_s[-1]):
            raise DomainError(
                f"t outside tabulated range [{self.times_s[0]}, {self.times_s[-1]}]")

    def __call__(self, t):
        t = _as_array(t)
        self._check(t)
        return np.interp(t, self.times_s, self.values)

    def _primitive(self, t):
        if self.times_s[0] > 0:
            raise DomainError("running integral needs samples starting at t=0")
        self._check(t)
        k = np.clip(np.searchsorted(self.times_s, t, side="right") - 1, 0, self.times_s.size - 2)
        tk = self.times_s[k]
        return self._cum[k] + 0.5 * (t - tk) * (self.values[k] + np.interp(t, self.times_s, self.values))

    def integral(self, a, b):
        a, b = np.broadcast_arrays(_as_array(a), _as_array(b))
        return self._primitive(b) - self._primitive(a)

    def mean(self, t):
        t = _as_array(t)
        safe = np.where(t > 0, t, 1.0)
        return np.where(t > 0, self._primitive(t) / safe, self(np.zeros_like(t)))


FieldModel = Union[Multitone, GaussianTrain, SingleGaussian, Tabulated]


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def eval_field(model: FieldModel, t):
    """Evaluate f(t); ``t`` may be a scalar or an array of times in seconds."""
    return _scalar_or_array(model(t), t)


def mean_integral(model: FieldModel, t):
    """Running mean F(t) = (1/t) int_0^t f, with F(0) = f(0)."""
    return _scalar_or_array(model.mean(t), t)


def running_integral(model: FieldModel, t):
    """int_0^t f(t') dt' (equal to ``t * F(t)``)."""
    t = np.asarray(t, dtype=float)
    return _scalar_or_array(model.integral(np.zeros_like(t), t), t)


def interval_integral(model: FieldModel, a, b):
    """int_a^b f(t') dt', vectorized over matching arrays ``a`` and ``b``."""
    out = model.integral(a, b)
    return float(out) if np.ndim(a) == 0 and np.ndim(b) == 0 else out

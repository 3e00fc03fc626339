"""
Pulse sequences, their +/-1 modulation function and its Fourier transform.

Conventions
-----------
Pulses are instantaneous. The modulation y(t) starts at +1 and flips sign at
every pulse. Its Fourier transform is taken as

    y~(omega) = int_0^T y(t) exp(-i omega t) dt,

so that only ``|y~|^2`` carries physics; the filter function used by
:mod:`optisense.noise` is ``|y~(omega)|^2`` in units of s^2.
"""
from __future__ import annotations

import csv
import math
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, DomainError, FilterPoleError

__all__ = [
    "PulseSequence",
    "SymmetricIntervals",
    "cp_sequence",
    "from_symmetric_intervals",
    "to_symmetric_intervals",
    "modulation_at",
    "fourier_transform",
    "filter_function",
    "cp_filter_reference",
    "read_sequence_csv",
    "write_sequence_csv",
]

# |omega| T below this switches to the moment expansion
SERIES_THRESHOLD = 1e-4


class PulseSequence:
    """Ordered pi-pulse times inside a sensing window ``[0, T]``.

    Parameters
    ----------
    total_time : float
        Sensing time T in seconds.
    pulse_times : sequence of float
        Strictly increasing pulse times, each in the open interval (0, T).
    """

    __slots__ = ("total_time", "pulse_times", "_edges", "_signs")

    def __init__(self, total_time: float, pulse_times: Iterable[float]):
        T = float(total_time)
        tp = np.array(list(pulse_times) if not isinstance(pulse_times, np.ndarray) else pulse_times,
                      dtype=float).reshape(-1)
        if not (T > 0 and math.isfinite(T)):
            raise ArgumentError(f"total time must be positive and finite, got {total_time!r}")
        if tp.size and (tp[0] <= 0 or tp[-1] >= T):
            raise ArgumentError("pulse times must lie strictly inside (0, T)")
        if np.any(np.diff(tp) <= 0):
            raise ArgumentError("pulse times must be strictly increasing")
        tp.flags.writeable = False
        edges = np.concatenate([[0.0], tp, [T]])
        edges.flags.writeable = False
        signs = 1.0 - 2.0 * (np.arange(tp.size + 1) % 2)
        signs.flags.writeable = False
        object.__setattr__(self, "total_time", T)
        object.__setattr__(self, "pulse_times", tp)
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_signs", signs)

    def __setattr__(self, name, value):
        raise AttributeError("PulseSequence is immutable")

    @property
    def n(self) -> int:
        return int(self.pulse_times.size)

    @property
    def edges(self) -> np.ndarray:
        """``(0, t_1, ..., t_n, T)``."""
        return self._edges

    @property
    def signs(self) -> np.ndarray:
        """Sign of y(t) on each of the n+1 free-evolution segments."""
        return self._signs

    @property
    def gaps(self) -> np.ndarray:
        """Durations of the n+1 free-evolution segments."""
        return np.diff(self._edges)

    @property
    def min_gap(self) -> float:
        """Shortest segment, including the ones touching 0 and T."""
        return float(self.gaps.min())

    def dc_balance(self) -> float:
        """Signed time balance ``y~(0) = sum_j (-1)^j (t_{j+1} - t_j)``."""
        return float(np.dot(self._signs, self.gaps))

    def __eq__(self, other):
        if not isinstance(other, PulseSequence):
            return NotImplemented
        return (self.total_time == other.total_time
                and np.array_equal(self.pulse_times, other.pulse_times))

    def __hash__(self):
        return hash((self.total_time, self.pulse_times.tobytes()))

    def __repr__(self):
        return f"PulseSequence(T={self.total_time!r}, n={self.n})"


class SymmetricIntervals:
    """Window durations tau_j with pulse j centred in window j.

    The windows tile ``[0, T]`` so ``T = sum tau_j``; with all tau_j equal
    the induced sequence is Carr-Purcell.
    """

    __slots__ = ("taus",)

    def __init__(self, taus: Sequence[float]):
        arr = np.array(taus, dtype=float).reshape(-1)
        if arr.size < 1:
            raise ArgumentError("need at least one interval")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ArgumentError("all intervals must be positive and finite")
        arr.flags.writeable = False
        object.__setattr__(self, "taus", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SymmetricIntervals is immutable")

    @property
    def n(self) -> int:
        return int(self.taus.size)

    @property
    def total_time(self) -> float:
        return math.fsum(self.taus)

    def __eq__(self, other):
        if not isinstance(other, SymmetricIntervals):
            return NotImplemented
        return np.array_equal(self.taus, other.taus)

    def __repr__(self):
        return f"SymmetricIntervals(n={self.n}, T={self.total_time!r})"


def cp_sequence(n: int, tau: float) -> PulseSequence:
    """Carr-Purcell sequence: n pulses at ``(j - 1/2) tau``, ``T = n tau``."""
    if int(n) != n or n < 1:
        raise ArgumentError(f"pulse count must be an integer >= 1, got {n!r}")
    if not tau > 0:
        raise ArgumentError(f"pulse spacing must be positive, got {tau!r}")
    n = int(n)
    return PulseSequence(n * tau, (np.arange(1, n + 1) - 0.5) * tau)


def from_symmetric_intervals(tau) -> PulseSequence:
    """Build the pulse sequence induced by symmetric intervals.

    Pulse positions are correctly rounded sums, so equal intervals reproduce
    :func:`cp_sequence` bit for bit.
    """
    if not isinstance(tau, SymmetricIntervals):
        tau = SymmetricIntervals(tau)
    taus = tau.taus.tolist()
    pulses = [math.fsum(taus[:j] + [0.5 * taus[j]]) for j in range(len(taus))]
    return PulseSequence(math.fsum(taus), pulses)


def to_symmetric_intervals(seq: PulseSequence, rtol: float = 1e-9) -> SymmetricIntervals:
    """Invert :func:`from_symmetric_intervals`.

    Raises
    ------
    ArgumentError
        If ``seq`` has no pulses or is not of the symmetric form.
    """
    if seq.n < 1:
        raise ArgumentError("a sequence without pulses has no interval representation")
    g = seq.gaps
    taus = np.empty(seq.n)
    taus[0] = 2.0 * g[0]
    for j in range(1, seq.n):
        taus[j] = 2.0 * g[j] - taus[j - 1]
    if np.any(taus <= 0) or abs(0.5 * taus[-1] - g[-1]) > rtol * seq.total_time:
        raise ArgumentError("sequence is not symmetric about its pulses")
    return SymmetricIntervals(taus)


def modulation_at(seq: PulseSequence, t):
    """y(t) = (-1)^(number of pulses at or before t)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr > seq.total_time):
        raise DomainError(f"t outside [0, {seq.total_time}]")
    k = np.searchsorted(seq.pulse_times, arr, side="right")
    y = 1 - 2 * (k % 2)
    return int(y) if arr.ndim == 0 else y


def _moment_series(seq: PulseSequence, omega: np.ndarray) -> np.ndarray:
    # int y(t) (-i w t)^m / m! dt, m = 0..3
    e = seq.edges
    out = np.zeros(omega.shape, dtype=complex)
    for m in range(4):
        mom = np.dot(seq.signs, (e[1:] ** (m + 1) - e[:-1] ** (m + 1)) / (m + 1))
        out += (-1j * omega) ** m / math.factorial(m) * mom
    return out


def fourier_transform(seq: PulseSequence, omega):
    """Exact transform ``y~(omega)`` of the modulation function (units of s).

    Each segment contributes ``L exp(-i omega m) sinc(omega L / 2 pi)`` with
    ``L`` its length and ``m`` its midpoint; for ``|omega| T`` below
    ``SERIES_THRESHOLD`` a four-term moment expansion is used instead.
    """
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    e = seq.edges
    L = np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    x = w[..., None]
    terms = seq.signs * L * np.exp(-1j * x * mid) * np.sinc(x * L / (2.0 * np.pi))
    out = terms.sum(axis=-1)
    small = np.abs(w) * seq.total_time < SERIES_THRESHOLD
    if np.any(small):
        out = np.where(small, _moment_series(seq, w), out)
    return complex(out[0]) if scalar else out


def filter_function(seq: PulseSequence, omega):
    """``|y~(omega)|^2`` in s^2."""
    y = fourier_transform(seq, omega)
    return np.abs(y) ** 2 if not isinstance(y, complex) else abs(y) ** 2


def cp_filter_reference(n: int, T: float, nu: float, alpha: float = 0.0) -> float:
    """Closed-form CP filter ``[sinc(nu T) (1 - sec(pi nu T / n)) cos(pi nu T + alpha)]^2``.

    ``sinc`` is the normalized one, ``sin(pi x) / (pi x)``. For even ``n``,
    ``T^2`` times this value equals ``(Re[exp(i alpha) conj(y~(2 pi nu))])^2``,
    the squared overlap of the modulation with ``cos(2 pi nu t + alpha)``; at
    ``alpha = -pi nu T`` the cosine factor is one and it reduces to
    ``|y~|^2 / T^2``.
    """
    if int(n) != n or n < 1 or not T > 0 or not nu > 0:
        raise ArgumentError("need integer n >= 1, T > 0 and nu > 0")
    x = math.pi * nu * T
    c = math.cos(x / n)
    if abs(c) < 1e-13:
        raise FilterPoleError(nu)
    amp = float(np.sinc(nu * T)) * (1.0 - 1.0 / c) * math.cos(x + alpha)
    return amp * amp


def write_sequence_csv(seq: PulseSequence, path) -> None:
    """One pulse time per row under the header ``t_pulse_s``; T in a comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# T_s={seq.total_time!r}\n")
        w = csv.writer(fh)
        w.writerow(["t_pulse_s"])
        for t in seq.pulse_times:
            w.writerow([repr(float(t))])


def read_sequence_csv(path, total_time: float | None = None) -> PulseSequence:
    """Read a file written by :func:`write_sequence_csv`."""
    T = total_time
    times = []
    with open(path, newline="") as fh:
        rows = [line for line in fh]
    body = []
    for line in rows:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "T_s" and T is None:
                T = float(val)
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if [h.strip() for h in header] != ["t_pulse_s"]:
        raise ArgumentError(f"{path}: expected header 't_pulse_s', got {header!r}")
    for row in reader:
        if row:
            times.append(float(row[0]))
    if T is None:
        raise ArgumentError(f"{path}: total time missing (no '# T_s=' line)")
    return PulseSequence(T, times)

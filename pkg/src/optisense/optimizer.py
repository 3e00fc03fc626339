"""
Constrained Nelder-Mead search for sensing-optimal control, plus brute-force
grid maps and sensing-time sweeps used to cross-check it.

Two search spaces are supported:

``TimePhase``
    A Carr-Purcell sequence with free total time ``T`` and a joint phase
    shift ``alpha`` of the target field.
``Intervals``
    Symmetric intervals ``tau_1..tau_n`` (each pulse centred in its window),
    optionally with ``sum(tau) = T`` held fixed and ``alpha`` appended as an
    extra coordinate.

Bound violations are handled by a penalty on top of the best feasible cost
seen so far; the fixed-``T`` constraint is enforced by rescaling every trial
point back onto ``sum(tau) = T``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .control import SymmetricIntervals, cp_sequence, from_symmetric_intervals
from .errors import ArgumentError, InfeasibleError
from .field import Multitone
from .noise import ChiEvaluator
from .sensing import SensitivityReport, SensorParams, accumulated_phase, sensitivity_from

__all__ = [
    "DEFAULT_MIN_SPACING",
    "NMOptions",
    "Bounds",
    "TimePhase",
    "Intervals",
    "OptimizationResult",
    "nelder_mead",
    "optimize_time_phase",
    "optimize_intervals",
    "GridMap",
    "grid_map",
    "sweep_T",
    "write_result_csv",
    "write_manifest",
]

DEFAULT_MIN_SPACING = 6e-7  # s; about ten pi-pulse durations
_NO_FEASIBLE_COST = 1e100


@dataclass(frozen=True)
class NMOptions:
    """Nelder-Mead settings.

    ``xtol`` is an absolute per-coordinate tolerance (scalar or one value per
    coordinate) and ``ftol`` a relative tolerance on the cost spread;
    ``fatol`` is an absolute floor on that spread for costs near zero.
    """

    xtol: object = 1e-9
    ftol: float = 1e-6
    fatol: float = 1e-14
    max_evals: int = 20000
    initial_step: object = None
    penalty: float = 1e4


@dataclass(frozen=True)
class Bounds:
    """Box constraints; ``None`` entries default to unbounded."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def make(cls, lower, upper, d: int) -> "Bounds":
        lo = np.full(d, -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, float), (d,)).copy()
        hi = np.full(d, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), (d,)).copy()
        if np.any(lo > hi):
            raise ArgumentError("lower bound exceeds upper bound")
        return cls(lo, hi)

    def violation(self, x, scale) -> float:
        below = np.maximum(self.lower - x, 0.0)
        above = np.maximum(x - self.upper, 0.0)
        return float(np.sum(((below + above) / scale) ** 2))


@dataclass
class OptimizationResult:
    """Outcome of a (multi-start) search.

    ``x`` is the best feasible parameter vector and ``eta`` its cost;
    ``restart_bests`` holds the best cost of every start and ``trace`` the
    running best after each simplex iteration of the run that won.
    """

    x: np.ndarray
    eta: float
    n_evals: int
    restart_bests: list
    converged: bool
    violations: int = 0
    trace: list = dc_field(default_factory=list)
    sequence: object = None
    alpha: float = 0.0
    per_T: list = dc_field(default_factory=list)


def _tol_vector(v, d, default):
    if v is None:
        return np.full(d, default)
    return np.broadcast_to(np.asarray(v, dtype=float), (d,)).astype(float)


def nelder_mead(cost: Callable, x0, bounds: Optional[Bounds] = None, opts: NMOptions = NMOptions(),
                project: Optional[Callable] = None, feasible: Optional[Callable] = None
                ) -> OptimizationResult:
    """Minimize ``cost`` with a penalized Nelder-Mead simplex.

    Parameters
    ----------
    cost : callable
        Maps a 1-D array to a float; may return ``inf``.
    x0 : array_like
        Starting point. It is clipped into ``bounds`` and passed through
        ``project`` before use.
    bounds : Bounds, optional
        Box constraints, handled by penalty.
    opts : NMOptions
    project : callable, optional
        Applied to every trial point before evaluation (e.g. renormalization
        onto an equality constraint).
    feasible : callable, optional
        Extra feasibility predicate on top of the box.

    Returns
    -------
    OptimizationResult
        Best feasible point seen. ``converged`` is False when the run stopped
        on the evaluation budget.

    Raises
    ------
    InfeasibleError
        If no feasible point was evaluated.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    d = x0.size
    if d < 1:
        raise ArgumentError("need at least one parameter")
    bounds = bounds or Bounds.make(None, None, d)
    proj = project or (lambda x: x)
    xtol = _tol_vector(opts.xtol, d, 1e-9)
    step = _tol_vector(opts.initial_step, d, 0.0)
    for i in range(d):
        if step[i] == 0.0:
            width = bounds.upper[i] - bounds.lower[i]
            step[i] = 0.1 * width if np.isfinite(width) and width > 0 else max(0.05 * abs(x0[i]), 2.5e-4)
    scale = np.maximum(step, 1e-300)

    state = {"best_f": math.inf, "best_x": None, "n": 0}

    def is_feasible(x):
        ok = bool(np.all(x >= bounds.lower) and np.all(x <= bounds.upper))
        return ok and (feasible is None or bool(feasible(x)))

    def evaluate(x):
        state["n"] += 1
        if is_feasible(x):
            f = float(cost(x))
            if f < state["best_f"]:
                state["best_f"], state["best_x"] = f, x.copy()
            return f
        v = bounds.violation(x, scale) + (0.0 if feasible is None or feasible(x) else 1.0)
        fb = state["best_f"]
        if not math.isfinite(fb):
            return _NO_FEASIBLE_COST * (1.0 + v)
        return fb + opts.penalty * (1.0 + abs(fb)) * max(v, 1e-300)

    x0 = proj(np.clip(x0, bounds.lower, bounds.upper))
    simplex = [x0]
    for i in range(d):
        xi = x0.copy()
        xi[i] += step[i]
        if xi[i] > bounds.upper[i]:
            xi[i] = x0[i] - step[i]
        simplex.append(proj(xi))
    simplex = np.array(simplex)
    fvals = np.array([evaluate(x) for x in simplex])
    trace = []
    converged = False

    while state["n"] < opts.max_evals:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        trace.append(state["best_f"])
        spread = fvals[-1] - fvals[0]
        diam_ok = np.all(np.max(np.abs(simplex[1:] - simplex[0]), axis=0) <= xtol)
        f_ok = spread <= max(opts.ftol * abs(fvals[0]), opts.fatol)
        if diam_ok and f_ok:
            converged = True
            break
        c = simplex[:-1].mean(axis=0)
        xw, fw = simplex[-1], fvals[-1]
        xr = proj(c + (c - xw))
        fr = evaluate(xr)
        if fr < fvals[0]:
            xe = proj(c + 2.0 * (c - xw))
            fe = evaluate(xe)
            simplex[-1], fvals[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fw:
            xc = proj(c + 0.5 * (xr - c))
            fc = evaluate(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = proj(c + 0.5 * (xw - c))
            fc = evaluate(xc)
            if fc < fw:
                simplex[-1], fvals[-1] = xc, fc
                continue
        for i in range(1, d + 1):
            simplex[i] = proj(simplex[0] + 0.5 * (simplex[i] - simplex[0]))
            fvals[i] = evaluate(simplex[i])

    if state["best_x"] is None:
        raise InfeasibleError("no feasible point found within the evaluation budget")
    return OptimizationResult(x=state["best_x"], eta=state["best_f"], n_evals=state["n"],
                              restart_bests=[state["best_f"]], converged=converged, trace=trace)


# -- search spaces ------------------------------------------------------------

@dataclass(frozen=True)
class TimePhase:
    """Bounds on CP total time (s) and field phase shift (rad).

    With ``alpha_fixed`` set the phase is not searched.
    """

    t_min: float
    t_max: float
    alpha_min: float = 0.0
    alpha_max: float = 2.0 * math.pi
    alpha_fixed: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ArgumentError("need 0 < t_min < t_max")
        if self.alpha_fixed is None and not self.alpha_min < self.alpha_max:
            raise ArgumentError("need alpha_min < alpha_max")

    @property
    def dim(self) -> int:
        return 1 if self.alpha_fixed is not None else 2

    def bounds(self) -> Bounds:
        if self.alpha_fixed is not None:
            return Bounds.make([self.t_min], [self.t_max], 1)
        return Bounds.make([self.t_min, self.alpha_min], [self.t_max, self.alpha_max], 2)

    def split(self, x):
        return float(x[0]), float(self.alpha_fixed if self.alpha_fixed is not None else x[1])


@dataclass(frozen=True)
class Intervals:
    """Symmetric-interval search space for ``n`` pulses.

    Parameters
    ----------
    n : int
        Pulse count.
    min_spacing, max_spacing : float
        Per-interval bounds in s. ``min_spacing`` below 600 ns requires
        ``allow_small_spacing=True``.
    total_time : float, optional
        Hold ``sum(tau)`` at this value.
    with_phase : bool
        Append the field phase shift as coordinate ``n``.
    """

    n: int
    min_spacing: float = DEFAULT_MIN_SPACING
    max_spacing: float = math.inf
    total_time: Optional[float] = None
    with_phase: bool = False
    allow_small_spacing: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ArgumentError("interval search needs n >= 2")
        if not self.min_spacing > 0:
            raise ArgumentError("min_spacing must be positive")
        if self.min_spacing < DEFAULT_MIN_SPACING and not self.allow_small_spacing:
            raise ArgumentError(
                f"min_spacing below {DEFAULT_MIN_SPACING} s needs allow_small_spacing=True")
        if not self.max_spacing > self.min_spacing:
            raise ArgumentError("max_spacing must exceed min_spacing")
        if self.total_time is not None and self.n * self.min_spacing > self.total_time:
            raise InfeasibleError(
                f"n * min_spacing = {self.n * self.min_spacing:.6g} s exceeds T = {self.total_time:.6g} s")

    @property
    def dim(self) -> int:
        return self.n + (1 if self.with_phase else 0)

    def bounds(self) -> Bounds:
        lo = [self.min_spacing] * self.n + ([-math.inf] if self.with_phase else [])
        hi = [self.max_spacing] * self.n + ([math.inf] if self.with_phase else [])
        return Bounds.make(lo, hi, self.dim)

    def project(self, x):
        if self.total_time is None:
            return x
        y = x.copy()
        tau = y[: self.n]
        s = math.fsum(tau)
        if s > 0:
            y[: self.n] = tau * (self.total_time / s)
        return y

    def split(self, x):
        return np.asarray(x[: self.n], float), float(x[self.n]) if self.with_phase else 0.0


# -- cost functions -------------------------------------------------------------

def _shift(model, alpha):
    if alpha == 0.0:
        return model
    if not isinstance(model, Multitone):
        raise ArgumentError("a phase shift is only defined for multitone fields")
    return model.shifted(alpha)


def _report(seq, model, chi_eval, params, alpha=0.0) -> SensitivityReport:
    phi = accumulated_phase(seq, _shift(model, alpha), params)
    return sensitivity_from(seq.total_time, chi_eval(seq), phi)


def _eta(seq, model, chi_eval, params, alpha=0.0) -> float:
    phi = accumulated_phase(seq, _shift(model, alpha), params)
    if phi == 0.0:
        return math.inf
    return math.exp(chi_eval(seq)) * math.sqrt(seq.total_time) / abs(phi)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def optimize_time_phase(model, spec, n: int, space: TimePhase, params: SensorParams = SensorParams(),
                        opts: NMOptions = NMOptions(xtol=(1e-9, 1e-6)), restarts: int = 8,
                        seed: int = 0, threads: int = 1, x0=None) -> OptimizationResult:
    """Minimize eta over CP total time and joint field phase.

    Starts are a latin hypercube over the bounds (plus ``x0`` if given); the
    best start is polished once more from a fresh simplex.
    """
    if int(n) != n or n < 1:
        raise ArgumentError("pulse count must be an integer >= 1")
    chi_eval = ChiEvaluator(spec, space.t_max, level=0)
    bounds = space.bounds()
    d = space.dim
    xtol = _tol_vector(opts.xtol, 2, 1e-9)[:d]

    def cost(x):
        T, alpha = space.split(x)
        return _eta(cp_sequence(n, T / n), model, chi_eval, params, alpha)

    rng = np.random.default_rng(seed)
    lhs = qmc.LatinHypercube(d=d, seed=rng).random(max(restarts, 1))
    starts = [qmc.scale(lhs, bounds.lower, bounds.upper)[i] for i in range(lhs.shape[0])]
    if x0 is not None:
        starts.insert(0, np.atleast_1d(np.asarray(x0, float))[:d])
    width = bounds.upper - bounds.lower
    o = NMOptions(xtol=xtol, ftol=opts.ftol, fatol=opts.fatol, max_evals=opts.max_evals,
                  initial_step=0.1 * width if opts.initial_step is None else opts.initial_step,
                  penalty=opts.penalty)
    runs = _map(lambda s: nelder_mead(cost, s, bounds, o), starts, threads)
    best = min(runs, key=lambda r: r.eta)
    polish = nelder_mead(cost, best.x, bounds,
                         NMOptions(xtol=xtol, ftol=opts.ftol, fatol=opts.fatol,
                                   max_evals=opts.max_evals, initial_step=0.01 * width,
                                   penalty=opts.penalty))
    final = polish if polish.eta <= best.eta else best
    T, alpha = space.split(final.x)
    return OptimizationResult(
        x=final.x, eta=final.eta, n_evals=sum(r.n_evals for r in runs) + polish.n_evals,
        restart_bests=[r.eta for r in runs], converged=all(r.converged for r in runs) and polish.converged,
        trace=final.trace, sequence=cp_sequence(n, T / n), alpha=alpha)


def _intervals_once(model, spec_eval, space: Intervals, params, opts, x0, restarts):
    bounds = space.bounds()

    def cost(x):
        tau, alpha = space.split(x)
        return _eta(from_symmetric_intervals(tau), model, spec_eval, params, alpha)

    def feasible(x):
        if space.total_time is None:
            return True
        return abs(math.fsum(x[: space.n]) - space.total_time) <= 1e-12 * space.total_time

    tau0 = np.asarray(x0[: space.n], float)
    xtol = np.r_[np.full(space.n, 1e-9), [1e-6] * (1 if space.with_phase else 0)]
    if opts.xtol is not None:
        xtol = _tol_vector(opts.xtol, space.dim, 1e-9) if np.ndim(opts.xtol) else np.r_[
            np.full(space.n, float(opts.xtol)), [1e-6] * (1 if space.with_phase else 0)]
    step = opts.initial_step
    if step is None:
        step = np.r_[0.1 * tau0, [0.3] * (1 if space.with_phase else 0)]
    o = NMOptions(xtol=xtol, ftol=opts.ftol, fatol=opts.fatol, max_evals=opts.max_evals,
                  initial_step=step, penalty=opts.penalty)
    runs = [nelder_mead(cost, x0, bounds, o, project=space.project, feasible=feasible)]
    for _ in range(restarts):
        small = np.r_[0.05 * runs[-1].x[: space.n], [0.1] * (1 if space.with_phase else 0)]
        o = NMOptions(xtol=xtol, ftol=opts.ftol, fatol=opts.fatol, max_evals=opts.max_evals,
                      initial_step=small, penalty=opts.penalty)
        start = min(runs, key=lambda r: r.eta).x
        runs.append(nelder_mead(cost, start, bounds, o, project=space.project, feasible=feasible))
    best = min(runs, key=lambda r: r.eta)
    tau, alpha = space.split(best.x)
    return OptimizationResult(
        x=best.x, eta=best.eta, n_evals=sum(r.n_evals for r in runs),
        restart_bests=[r.eta for r in runs], converged=runs[-1].converged, trace=best.trace,
        sequence=from_symmetric_intervals(tau), alpha=alpha)


def optimize_intervals(model, spec, n: int, T=None, params: SensorParams = SensorParams(),
                       opts: NMOptions = NMOptions(xtol=1e-9, max_evals=20000), *,
                       min_spacing: float = DEFAULT_MIN_SPACING, max_spacing: float = math.inf,
                       allow_small_spacing: bool = False, with_phase: bool = False,
                       restarts: int = 2, x0=None, threads: int = 1) -> OptimizationResult:
    """Minimize eta over symmetric intervals, starting from CP.

    ``T`` may be ``None`` (free total time, starting from ``x0`` which is
    then required), a single value, or a sequence of values. For a sequence
    each entry is optimized separately, the per-T results are stored in
    ``per_T`` and the overall best is returned.

    Raises
    ------
    InfeasibleError
        If ``n * min_spacing`` exceeds a requested ``T``.
    """
    if T is not None and np.ndim(T) > 0:
        Ts = [float(t) for t in T]
        if not Ts:
            raise ArgumentError("empty T grid")
        results = _map(lambda t: optimize_intervals(
            model, spec, n, t, params, opts, min_spacing=min_spacing, max_spacing=max_spacing,
            allow_small_spacing=allow_small_spacing, with_phase=with_phase,
            restarts=restarts, x0=None, threads=1), Ts, threads)
        best = min(results, key=lambda r: r.eta)
        out = OptimizationResult(**{k: getattr(best, k) for k in best.__dataclass_fields__})
        out.per_T = [(t, r) for t, r in zip(Ts, results)]
        out.n_evals = sum(r.n_evals for r in results)
        return out

    space = Intervals(n, min_spacing, max_spacing, None if T is None else float(T), with_phase,
                      allow_small_spacing)
    if x0 is None:
        if T is None:
            raise ArgumentError("free-T interval search needs an explicit starting point")
        x0 = np.full(n, float(T) / n)
        if with_phase:
            x0 = np.r_[x0, 0.0]
    else:
        x0 = np.asarray(x0, float)
        if x0.size == n and with_phase:
            x0 = np.r_[x0, 0.0]
        if x0.size != space.dim:
            raise ArgumentError(f"x0 has {x0.size} entries, expected {space.dim}")
    T_max = float(T) if T is not None else 2.0 * float(np.sum(x0[:n]))
    if T is None and space.max_spacing < math.inf:
        T_max = n * space.max_spacing
    spec_eval = ChiEvaluator(spec, T_max, level=0)
    return _intervals_once(model, spec_eval, space, params, opts, x0, restarts)


# -- brute-force maps and sweeps -------------------------------------------------------

@dataclass
class GridMap:
    """Inverse sensitivity on a ``(alpha, T)`` grid; rows are alpha values."""

    T: np.ndarray
    alpha: np.ndarray
    inv_eta: np.ndarray

    def argmax(self):
        i, j = np.unravel_index(np.argmax(self.inv_eta), self.inv_eta.shape)
        return float(self.T[j]), float(self.alpha[i]), float(self.inv_eta[i, j])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha_rad", "T_s", "inv_eta"])
            for i, a in enumerate(self.alpha):
                for j, t in enumerate(self.T):
                    w.writerow([f"{a:.12g}", f"{t:.12g}", f"{self.inv_eta[i, j]:.12g}"])


def grid_map(model, spec, n: int, T_range, alpha_range, steps, params: SensorParams = SensorParams(),
             threads: int = 1) -> GridMap:
    """Evaluate ``1 / eta`` for CP-``n`` on a dense (T, alpha) grid.

    ``steps`` is ``(n_T, n_alpha)``; both ranges include their endpoints.
    """
    nT, nA = (int(steps), int(steps)) if np.ndim(steps) == 0 else (int(steps[0]), int(steps[1]))
    if nT < 1 or nA < 1:
        raise ArgumentError("grid steps must be positive")
    if not 0 < T_range[0] <= T_range[1]:
        raise ArgumentError("T range must be positive and ordered")
    Ts = np.linspace(T_range[0], T_range[1], nT)
    alphas = np.linspace(alpha_range[0], alpha_range[1], nA)
    chi_eval = ChiEvaluator(spec, float(Ts[-1]), level=0)
    seqs = [cp_sequence(n, t / n) for t in Ts]
    chis = np.array([chi_eval(s) for s in seqs])

    def row(a):
        m = _shift(model, a)
        out = np.empty(nT)
        for j, s in enumerate(seqs):
            out[j] = 1.0 / sensitivity_from(s.total_time, chis[j], accumulated_phase(s, m, params)).eta
        return out

    return GridMap(Ts, alphas, np.array(_map(row, alphas, threads)))


def sweep_T(model, spec, family, T_list, params: SensorParams = SensorParams(), alpha: float = 0.0,
            threads: int = 1) -> list:
    """Sensitivity reports for a sequence family at each total time.

    ``family`` is a pulse count (CP) or a :class:`SymmetricIntervals`
    template whose intervals are rescaled to each ``T``.
    """
    Ts = np.asarray(T_list, dtype=float).reshape(-1)
    if Ts.size == 0:
        raise ArgumentError("empty T grid")
    if np.any(Ts <= 0) or np.any(np.diff(Ts) <= 0):
        raise ArgumentError("T values must be positive and increasing")
    if isinstance(family, SymmetricIntervals):
        base = family.taus / family.total_time
        make = lambda T: from_symmetric_intervals(base * T)  # noqa: E731
    else:
        if int(family) != family or family < 1:
            raise ArgumentError("sequence family must be a pulse count or SymmetricIntervals")
        make = lambda T: cp_sequence(int(family), T / int(family))  # noqa: E731
    chi_eval = ChiEvaluator(spec, float(Ts[-1]), level=0)
    return _map(lambda T: _report(make(T), model, chi_eval, params, alpha), list(Ts), threads)


# -- serialization -------------------------------------------------------------------

def write_result_csv(result: OptimizationResult, path) -> None:
    """One row ``param_0..param_{d-1},eta`` for the best point."""
    x = np.atleast_1d(result.x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"param_{i}" for i in range(x.size)] + ["eta"])
        w.writerow([f"{v:.12g}" for v in x] + [f"{result.eta:.12g}"])


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, config, seed: int, n_evals: int, **extra) -> None:
    """Run manifest: config hash, seed and cost-evaluation count."""
    data = {"config_sha256": config_hash(config), "seed": int(seed), "n_evals": int(n_evals)}
    data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")

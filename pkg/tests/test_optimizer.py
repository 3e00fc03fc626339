import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optisense.control import SymmetricIntervals, cp_sequence, from_symmetric_intervals
from optisense.errors import ArgumentError, InfeasibleError
from optisense.field import Multitone, Tabulated
from optisense.noise import ChiEvaluator, GaussianMixture
from optisense.optimizer import (Bounds, Intervals, NMOptions, TimePhase, _eta, config_hash,
                                 grid_map, nelder_mead, optimize_intervals, optimize_time_phase,
                                 sweep_T, write_manifest, write_result_csv)
from optisense.sensing import SensorParams, sensitivity

ZERO = GaussianMixture.zero()
NU = 20.5e3


def test_quadratic_bowl():
    r = nelder_mead(lambda x: (x[0] - 3.0) ** 2, [0.0])
    assert r.x[0] == pytest.approx(3.0, abs=1e-6)
    assert r.converged


def test_rosenbrock():
    rosen = lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2  # noqa: E731
    r = nelder_mead(rosen, [-1.2, 1.0], opts=NMOptions(xtol=1e-10, ftol=1e-14, fatol=1e-20))
    assert r.x == pytest.approx([1.0, 1.0], abs=1e-4)


def test_active_bound():
    r = nelder_mead(lambda x: x[0], [2.0], Bounds.make([0.6], None, 1))
    assert r.x[0] == pytest.approx(0.6, abs=1e-8)
    assert r.x[0] >= 0.6


@settings(max_examples=25)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3))
def test_result_never_worse_than_start(a, b, s):
    cost = lambda x: math.cos(s * x[0]) + (x[1] - a) ** 2 + 0.01 * x[0] ** 2  # noqa: E731
    x0 = np.array([b, 0.0])
    r = nelder_mead(cost, x0, opts=NMOptions(max_evals=300))
    assert r.eta <= cost(x0)
    assert r.eta <= min(r.trace) + 1e-15


def test_infeasible_raises():
    with pytest.raises(InfeasibleError):
        nelder_mead(lambda x: x[0] ** 2, [1.0], feasible=lambda x: False,
                    opts=NMOptions(max_evals=50))


def test_bounds_validation():
    with pytest.raises(ArgumentError):
        Bounds.make([1.0], [0.0], 1)


def test_eval_budget_respected():
    r = nelder_mead(lambda x: float(np.sum(x ** 2)), np.ones(5), opts=NMOptions(max_evals=40))
    assert r.n_evals <= 40 + 5
    assert not r.converged


def test_noiseless_optimum_matches_dense_grid():
    field = Multitone.single(NU)
    r = optimize_time_phase(field, ZERO, 8, TimePhase(150e-6, 250e-6, alpha_fixed=0.0), restarts=4)
    T = np.linspace(190e-6, 202e-6, 4801)
    eta = [sensitivity(cp_sequence(8, t / 8), field, ZERO).eta for t in T]
    assert r.x[0] == pytest.approx(T[int(np.argmin(eta))], abs=2.5e-9 + 1e-9)
    assert r.eta <= min(eta) * (1 + 1e-9)


def test_noise_aware_optimum_beats_resonance(lobe_noise):
    field = Multitone.single(NU)
    r = optimize_time_phase(field, lobe_noise, 8, TimePhase(100e-6, 400e-6), seed=1)
    ref = sensitivity(cp_sequence(8, 1 / (2 * NU)), field, lobe_noise).eta
    assert r.eta <= ref
    assert len(r.restart_bests) == 8
    assert r.eta <= min(r.restart_bests)


def test_phase_periodicity_of_cost(lobe_noise):
    field = Multitone.single(NU)
    ev = ChiEvaluator(lobe_noise, 400e-6, level=0)
    s = cp_sequence(8, 26e-6)
    a = _eta(s, field, ev, SensorParams(), 2.1)
    b = _eta(s, field, ev, SensorParams(), 2.1 + 2 * math.pi)
    assert a == pytest.approx(b, rel=1e-12)


def test_time_phase_is_deterministic(lobe_noise):
    field = Multitone.single(NU)
    space = TimePhase(100e-6, 400e-6)
    a = optimize_time_phase(field, lobe_noise, 8, space, seed=42, restarts=3)
    b = optimize_time_phase(field, lobe_noise, 8, space, seed=42, restarts=3)
    c = optimize_time_phase(field, lobe_noise, 8, space, seed=42, restarts=3, threads=3)
    assert a.x.tobytes() == b.x.tobytes() == c.x.tobytes()
    assert a.n_evals == b.n_evals == c.n_evals


def test_cp_is_matched_filter_for_single_tone():
    n, T = 8, 8 / (2 * NU)
    field = Multitone.single(NU)
    r = optimize_intervals(field, ZERO, n, T, restarts=1)
    cp = sensitivity(cp_sequence(n, T / n), field, ZERO).eta
    assert r.eta <= cp
    assert r.eta >= cp * 0.99


def test_interval_result_is_feasible(lobe_noise):
    field = Multitone((0.6, 0.4), (NU, 33e3))
    T = 160e-6
    r = optimize_intervals(field, lobe_noise, 6, T, min_spacing=8e-6, restarts=1)
    tau = r.x[:6]
    assert np.all(tau >= 8e-6)
    assert abs(math.fsum(tau) - T) <= 1e-12 * T
    assert r.sequence.total_time == pytest.approx(T, rel=1e-12)
    assert r.violations == 0


def test_lattice_dominance_four_intervals(lobe_noise):
    field = Multitone((0.6, 0.4), (NU, 33e3))
    lo, hi = 4e-6, 40e-6
    lattice = np.linspace(lo, hi, 6)
    ev = ChiEvaluator(lobe_noise, 4 * hi, level=0)
    lattice_best = min(_eta(from_symmetric_intervals(np.array(p)), field, ev, SensorParams())
                       for p in itertools.product(lattice, repeat=4))
    r = optimize_intervals(field, lobe_noise, 4, None, x0=np.full(4, 22e-6), min_spacing=lo,
                           max_spacing=hi, restarts=4)
    assert r.eta <= lattice_best
    assert np.all((r.x >= lo) & (r.x <= hi))


def test_intervals_over_T_grid(lobe_noise):
    field = Multitone.single(NU)
    Ts = [180e-6, 200e-6, 220e-6]
    r = optimize_intervals(field, lobe_noise, 4, Ts, restarts=0,
                           opts=NMOptions(xtol=1e-9, max_evals=600))
    assert [t for t, _ in r.per_T] == Ts
    assert r.eta == min(x.eta for _, x in r.per_T)


def test_infeasible_total_time():
    with pytest.raises(InfeasibleError):
        optimize_intervals(Multitone.single(NU), ZERO, 50, 20e-6)


def test_small_spacing_needs_flag():
    with pytest.raises(ArgumentError):
        Intervals(4, min_spacing=1e-7)
    assert Intervals(4, min_spacing=1e-7, allow_small_spacing=True).min_spacing == 1e-7


def test_projection_restores_total_time():
    sp = Intervals(3, total_time=30e-6)
    y = sp.project(np.array([5e-6, 10e-6, 20e-6]))
    assert math.fsum(y) == pytest.approx(30e-6, rel=1e-15)


def test_map_row_equals_sweep(lobe_noise):
    field = Multitone.single(NU)
    m = grid_map(field, lobe_noise, 8, (150e-6, 250e-6), (0.0, 2 * math.pi), (11, 5))
    reports = sweep_T(field, lobe_noise, 8, m.T)
    assert np.array_equal(m.inv_eta[0], np.array([1 / r.eta for r in reports]))


def test_map_is_periodic_in_phase(lobe_noise):
    field = Multitone((0.7, 0.3), (NU, 41e3))
    m = grid_map(field, lobe_noise, 8, (150e-6, 250e-6), (0.0, 4 * math.pi), (7, 9))
    assert np.allclose(m.inv_eta[:4], m.inv_eta[4:8], rtol=1e-10, atol=0)


def test_map_validation():
    with pytest.raises(ArgumentError):
        grid_map(Multitone.single(NU), ZERO, 8, (1e-4, 2e-4), (0, 1), (0, 3))


def test_sweep_zero_field_is_infinite():
    zero_field = Tabulated(np.linspace(0, 2e-4, 11), np.zeros(11))
    reports = sweep_T(zero_field, ZERO, 8, [100e-6, 150e-6])
    assert all(r.phi == 0.0 and r.eta_is_infinite for r in reports)


def test_sweep_template_rescales():
    tmpl = SymmetricIntervals([1e-6, 3e-6])
    r = sweep_T(Multitone.single(NU), ZERO, tmpl, [40e-6])[0]
    ref = sensitivity(from_symmetric_intervals([10e-6, 30e-6]), Multitone.single(NU), ZERO)
    assert r.eta == pytest.approx(ref.eta, rel=1e-12)


def test_sweep_validation():
    for bad in ([], [2e-4, 1e-4], [-1e-4]):
        with pytest.raises(ArgumentError):
            sweep_T(Multitone.single(NU), ZERO, 8, bad)


def test_sweep_peak_matches_optimizer():
    field = Multitone.single(NU)
    T = np.arange(150e-6, 250e-6, 1e-6)
    eta = [r.eta for r in sweep_T(field, ZERO, 8, T)]
    r = optimize_time_phase(field, ZERO, 8, TimePhase(150e-6, 250e-6, alpha_fixed=0.0))
    assert abs(T[int(np.argmin(eta))] - r.x[0]) <= 1e-6


def test_result_csv_and_manifest(tmp_path):
    r = nelder_mead(lambda x: float(np.sum((x - 1) ** 2)), [0.0, 0.0])
    write_result_csv(r, tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "param_0,param_1,eta"
    cfg = {"b": 1, "a": [1, 2]}
    write_manifest(tmp_path / "m.json", cfg, 7, r.n_evals)
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["config_sha256"] == config_hash({"a": [1, 2], "b": 1})
    assert data["seed"] == 7 and data["n_evals"] == r.n_evals

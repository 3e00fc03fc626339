import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from optisense.errors import ArgumentError, DomainError
from optisense.field import (GaussianTrain, Multitone, SingleGaussian, Tabulated, eval_field,
                             interval_integral, mean_integral, running_integral)


def quad_oracle(f, a, b, breaks=()):
    pts = [p for p in breaks if a < p < b]
    val, _ = quad(lambda t: float(f(t)), a, b, points=pts or None, limit=2000,
                  epsabs=1e-15, epsrel=1e-13)
    return val


def test_three_tone_at_zero(three_tone_field):
    assert eval_field(three_tone_field, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_multitone_weights_must_sum_to_one():
    with pytest.raises(ArgumentError):
        Multitone((0.5, 0.4), (1e3, 2e3))
    Multitone((0.5, 0.5 + 5e-13), (1e3, 2e3))


@pytest.mark.parametrize("kwargs", [dict(weights=(1.0,), freqs_hz=(0.0,)),
                                    dict(weights=(1.0,), freqs_hz=(-5.0,)),
                                    dict(weights=(), freqs_hz=())])
def test_multitone_rejects_bad_tones(kwargs):
    with pytest.raises(ArgumentError):
        Multitone(**kwargs)


def test_single_gaussian_peak():
    assert eval_field(SingleGaussian(150e-6, 300e-6), 300e-6) == 1.0


def test_gaussian_train_brute_force():
    g = GaussianTrain(1e-6, 10e-6, 100)
    t = 5e-6
    brute = sum(math.exp(-(t - i * 10e-6) ** 2 / (2 * 1e-12)) for i in range(101))
    assert eval_field(g, t) == pytest.approx(brute, rel=1e-13)


def test_gaussian_train_bounded_by_overlap():
    g = GaussianTrain(4e-6, 5e-6, 30)
    t = np.linspace(0, 150e-6, 3001)
    assert np.all(g(t) <= 3.0)


def test_gaussian_train_symmetric_about_interior_centers():
    g = GaussianTrain(1.3e-6, 9e-6, 60)
    for i in (10, 25, 40):
        for d in np.linspace(0, 4.5e-6, 7):
            assert g(i * 9e-6 + d) == pytest.approx(g(i * 9e-6 - d), abs=1e-12)


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        eval_field(Multitone.single(1e3), -1e-9)


def test_tabulated_interp_and_domain():
    tab = Tabulated(np.linspace(0, 1e-3, 11), np.linspace(0, 1, 11))
    assert eval_field(tab, 0.25e-3) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        eval_field(tab, 2e-3)


def test_tabulated_rejects_nonuniform_grid():
    with pytest.raises(ArgumentError):
        Tabulated([0.0, 1.0, 3.0], [0, 0, 0])
    with pytest.raises(ArgumentError):
        Tabulated([0.0, 2.0, 1.0], [0, 0, 0])


def test_mean_at_zero_is_value():
    m = Multitone((0.3, 0.7), (11e3, 37e3), (0.4, -1.1))
    assert mean_integral(m, 0.0) == pytest.approx(eval_field(m, 0.0), rel=1e-15)
    g = SingleGaussian(2e-6, 1e-6)
    assert mean_integral(g, 0.0) == pytest.approx(eval_field(g, 0.0), rel=1e-12)


def test_full_period_average_vanishes():
    nu = 13.7e3
    assert abs(mean_integral(Multitone.single(nu), 1.0 / nu)) < 1e-12


def test_multitone_mean_closed_form_from_sines():
    m = Multitone((0.2, 0.8), (5e3, 31e3), (0.3, 2.0))
    t = 123.4e-6
    expect = sum(w * (math.sin(2 * math.pi * nu * t + a) - math.sin(a)) / (2 * math.pi * nu * t)
                 for w, nu, a in zip(m.weights, m.freqs_hz, m.phases_rad))
    assert mean_integral(m, t) == pytest.approx(expect, rel=1e-12)


def test_single_gaussian_mean_against_quadrature():
    g = SingleGaussian(150e-6, 300e-6)
    t = 600e-6
    assert mean_integral(g, t) * t == pytest.approx(quad_oracle(g, 0, t), rel=1e-10)


@pytest.mark.parametrize("model,T", [
    (Multitone((0.45, 0.43, 0.12), (77e3, 96e3, 141e3), (0.2, 1.0, -0.4)), 300e-6),
    (GaussianTrain(2e-6, 11.2e-6, 40), 300e-6),
    (GaussianTrain(0.5e-6, 10e-6, 30), 250e-6),
    (SingleGaussian(150e-6, 300e-6), 600e-6),
    (SingleGaussian(3e-6, 20e-6), 50e-6),
])
def test_running_integral_matches_quadrature(model, T):
    breaks = ()
    if isinstance(model, GaussianTrain):
        breaks = tuple(np.arange(0, T, model.period_s))
    for t in np.linspace(0, T, 13)[1:]:
        q = quad_oracle(model, 0.0, t, breaks)
        assert abs(running_integral(model, t) - q) <= 1e-10 * (1 + abs(q))
        assert abs(mean_integral(model, t) * t - q) <= 1e-10 * (1 + abs(q))


def test_tabulated_integral_exact_for_piecewise_linear():
    t = np.linspace(0, 1e-4, 101)
    v = np.sin(t * 7e4)
    tab = Tabulated(t, v)
    a, b = 1.234e-5, 8.765e-5
    q = quad_oracle(tab, a, b, breaks=tuple(t))
    assert interval_integral(tab, a, b) == pytest.approx(q, rel=1e-11)


def test_scalar_in_scalar_out():
    m = Multitone.single(1e3)
    assert isinstance(eval_field(m, 1e-4), float)
    assert isinstance(mean_integral(m, 1e-4), float)
    assert isinstance(interval_integral(m, 0.0, 1e-4), float)
    assert eval_field(m, np.array([0.0, 1e-4])).shape == (2,)


def test_shift_is_periodic():
    m = Multitone((0.6, 0.4), (10e3, 17e3))
    a = m.shifted(0.7)
    b = m.shifted(0.7 + 2 * math.pi)
    t = np.linspace(0, 1e-3, 50)
    assert np.allclose(a(t), b(t), atol=1e-12)
    assert m.shifted(0.0) == m.shifted(2 * math.pi)


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=4),
       st.floats(1e3, 2e5), st.floats(-math.pi, math.pi), st.floats(1e-6, 5e-4))
def test_multitone_integral_additivity(ws, nu0, alpha, t):
    w = np.array(ws) / np.sum(ws)
    w[-1] = 1.0 - np.sum(w[:-1])
    m = Multitone(tuple(w), tuple(nu0 * (1 + k) for k in range(len(w))), (alpha,) * len(w))
    mid = 0.37 * t
    lhs = interval_integral(m, 0.0, t)
    rhs = interval_integral(m, 0.0, mid) + interval_integral(m, mid, t)
    assert lhs == pytest.approx(rhs, abs=1e-18 + 1e-12 * t)


@given(st.floats(0.2e-6, 5e-6), st.floats(4e-6, 20e-6), st.floats(0.0, 300e-6))
def test_gaussian_train_integral_nonnegative_and_bounded(sigma, period, t):
    g = GaussianTrain(sigma, period, 50)
    val = running_integral(g, t)
    peaks = math.floor(t / period) + 1
    assert -1e-18 <= val <= peaks * sigma * math.sqrt(2 * math.pi) + 1e-15

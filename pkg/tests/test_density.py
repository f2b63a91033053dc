import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from levyflux.density import (
    atom_at_minus_ct,
    characteristic_function,
    density,
    density_grid,
    entrance_law_q,
    fourier_density,
    marginal,
)
from levyflux.errors import AccuracyError, NoDensityError
from levyflux.models import Exponential, brownian, compound_poisson_minus_drift, gamma_minus_drift, pure_drift, stable

GAUSS_PEAK = 1.0 / math.sqrt(2.0 * math.pi)


def test_brownian_value_and_symmetry():
    bm = brownian()
    assert density(bm, 1.0, -1.0) == pytest.approx(math.exp(-0.5) * GAUSS_PEAK, abs=1e-15)
    xs = np.linspace(0.0, 5.0, 41)
    np.testing.assert_array_equal(density(bm, 1.3, xs), density(bm, 1.3, -xs))


def test_gamma_value():
    assert density(gamma_minus_drift(1.0), 1.0, 0.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert density(gamma_minus_drift(1.0), 1.0, -1.5) == 0.0


def test_no_density_for_compound_poisson():
    m = compound_poisson_minus_drift(1.0, 2.0, Exponential(1.0))
    with pytest.raises(NoDensityError):
        density(m, 1.0, 0.0)
    assert atom_at_minus_ct(m, 1.5) == pytest.approx(math.exp(-3.0))
    assert atom_at_minus_ct(pure_drift(), 1.0) == 1.0
    assert atom_at_minus_ct(brownian(), 1.0) == 0.0


def test_characteristic_function():
    bm = brownian()
    assert characteristic_function(bm, 1.0, 0.0) == 1.0 + 0.0j
    assert characteristic_function(bm, 1.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    u = np.linspace(0.1, 30.0, 50)
    for m in (gamma_minus_drift(1.0), stable(1.4), brownian(0.3, 2.0)):
        np.testing.assert_array_equal(characteristic_function(m, 0.7, -u), np.conj(characteristic_function(m, 0.7, u)))
        assert np.all(np.abs(characteristic_function(m, 0.7, u)) <= 1.0 + 1e-15)


def test_gamma_characteristic_function_closed_form():
    u = np.linspace(-20, 20, 81)
    t = 2.0
    exact = (1 - 1j * u) ** (-t) * np.exp(-1j * u * t)
    np.testing.assert_allclose(characteristic_function(gamma_minus_drift(1.0), t, u), exact, rtol=0, atol=1e-14)


def test_entrance_law():
    bm = brownian()
    assert entrance_law_q(bm, 1.0, 0.0) == 0.0
    assert entrance_law_q(bm, 1.0, 1.0) == pytest.approx(0.2419707245191434, abs=1e-15)
    for x in (0.3, 1.0, 2.5):
        assert entrance_law_q(bm, 1.7, x, "fourier") == pytest.approx(entrance_law_q(bm, 1.7, x), abs=1e-7)


def test_fourier_matches_closed_forms():
    bm = brownian(0.5, 2.0)
    xs = np.linspace(-3.0, 3.0, 61)
    assert np.max(np.abs(density(bm, 0.7, xs, "fourier") - density(bm, 0.7, xs, "closed_form"))) < 1e-7
    g = gamma_minus_drift(1.0)
    lo, hi = stats.gamma.ppf([0.005, 0.995], 3.0) - 3.0
    xs = np.linspace(lo, hi, 15)
    assert np.max(np.abs(density(g, 3.0, xs, "fourier") - density(g, 3.0, xs, "closed_form"))) < 1e-7


def test_slow_decay_refused():
    with pytest.raises(AccuracyError):
        fourier_density(gamma_minus_drift(1.0), 1.0, [0.0])


@pytest.mark.parametrize(
    "model,t",
    [(brownian(), 1.0), (brownian(-1.0, 0.5), 2.0), (gamma_minus_drift(1.0), 1.0), (gamma_minus_drift(1.0), 3.0), (stable(1.5), 1.0)],
    ids=["bm", "bm-drift", "gamma-t1", "gamma-t3", "stable-1.5"],
)
def test_grid_normalization(model, t):
    grid = density_grid(model, t)
    assert abs(grid.integral() - 1.0) <= 1e-4
    assert np.all(grid.p_values >= 0)
    law = marginal(model, t)
    centre = (grid.x_values > law.mean - 2.0) & (grid.x_values < law.mean + 2.0) & (grid.x_values > law.lower)
    assert np.all(grid.p_values[centre] > 0)


@pytest.mark.slow
def test_grid_normalization_heavy_tail():
    grid = density_grid(stable(1.2), 1.0)
    assert abs(grid.integral() - 1.0) <= 1e-4


def test_grid_rejects_bad_range():
    with pytest.raises(ValueError):
        density_grid(brownian(), 1.0, xmin=1.0, xmax=0.0)


@pytest.mark.parametrize("model", [brownian(), gamma_minus_drift(1.0), stable(1.5)], ids=["bm", "gamma", "stable"])
def test_chapman_kolmogorov(model):
    for s, t, x in ((0.4, 1.0, -0.3), (1.0, 2.5, 0.5), (0.7, 1.5, 1.2)):
        lo = -model.c * s if model.is_bounded_variation else -np.inf
        hi = x + model.c * (t - s) if model.is_bounded_variation else np.inf
        conv, _ = integrate.quad(lambda y: density(model, s, y) * density(model, t - s, x - y), lo, hi, epsabs=1e-10, limit=200)
        assert conv == pytest.approx(density(model, t, x), abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.05, 5.0), x=st.floats(-6.0, 6.0))
def test_brownian_density_is_gaussian(t, x):
    assert density(brownian(), t, x) == pytest.approx(stats.norm.pdf(x, scale=math.sqrt(t)), rel=1e-12, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.2, 4.0), x=st.floats(-0.5, 3.0))
def test_marginal_cdf_matches_pdf(t, x):
    law = marginal(gamma_minus_drift(1.0), t)
    assert law.cdf(x) == pytest.approx(stats.gamma.cdf(x + t, t), abs=1e-10)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from levyflux.density import marginal
from levyflux.fluctuation import (
    JointLawQuery,
    LaplaceQuery,
    big_phi,
    entrance_law_residual,
    fpt_density,
    inf_joint_density,
    inf_laplace,
    inf_moment,
    inf_tail,
    inf_tail_alt,
    joint_density,
    joint_law_from_entrance,
    laplace_p0,
    phi_identity_residual,
    phi_lambda_z,
    phi_ode_residual,
    sup_atom_density,
    sup_atom_total,
    sup_joint_density,
    sup_laplace,
    sup_moment,
    sup_tail,
)
from levyflux.errors import NoDensityError
from levyflux.models import Exponential, brownian, compound_poisson_minus_drift, gamma_minus_drift, pure_drift

BM = brownian()
GAMMA = gamma_minus_drift(1.0)
TWO_SIDED = 2.0 * special.ndtr(-1.0)  # P(|N(0,1)| > 1)


def bm_joint_sup(x, z, t):
    """Density of (sup_t, X_t) for standard Brownian motion."""
    return 2.0 * (2 * x - z) / math.sqrt(2 * math.pi * t**3) * math.exp(-((2 * x - z) ** 2) / (2 * t))


# first passage and tails ------------------------------------------------------


def test_fpt_reflection():
    assert fpt_density(BM, 1.0, 1.0) == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi), abs=1e-15)
    assert fpt_density(BM, 1e-12, 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.05, 4.0), t=st.floats(0.05, 4.0))
def test_fpt_matches_closed_form(x, t):
    exact = x * t**-1.5 * math.exp(-x * x / (2 * t)) / math.sqrt(2 * math.pi)
    assert fpt_density(BM, x, t) == pytest.approx(exact, rel=1e-12, abs=1e-300)


def test_tails_brownian():
    assert float(inf_tail(BM, 1.0, 1.0)) == pytest.approx(TWO_SIDED, abs=1e-10)
    assert float(inf_tail_alt(BM, 1.0, 1.0)) == pytest.approx(TWO_SIDED, abs=1e-10)
    assert float(sup_tail(BM, 1.0, 1.0)) == pytest.approx(TWO_SIDED, abs=1e-10)
    assert float(inf_tail(BM, 1.0, 1e-6)) < 1e-12
    assert float(inf_tail_alt(BM, 12.0, 1.0)) < 1e-6


@pytest.mark.parametrize("model", [BM, GAMMA], ids=["bm", "gamma"])
def test_inf_formulas_agree(model):
    for x in (0.25, 0.5, 1.0, 2.0, 3.0):
        for t in (0.25, 0.5, 1.0, 2.0, 4.0):
            assert float(inf_tail(model, x, t)) == pytest.approx(float(inf_tail_alt(model, x, t)), abs=1e-5)


def test_inf_tail_gamma_is_passage_cdf():
    # P(inf_t < -x) = ∫_0^t fpt density
    x, t = 0.5, 2.0
    val, _ = integrate.quad(lambda s: fpt_density(GAMMA, x, s), 0.0, t, points=[x], epsabs=1e-12)
    assert float(inf_tail(GAMMA, x, t)) == pytest.approx(val, abs=1e-8)


def test_sup_tail_at_zero():
    assert float(sup_tail(BM, 0.0, 1.0)) >= 1 - 1e-4
    for t in (0.5, 1.0, 2.0):
        assert float(sup_tail(GAMMA, 0.0, t)) == pytest.approx(1.0 - float(sup_atom_total(GAMMA, t)), abs=1e-5)


@pytest.mark.parametrize("model", [BM, GAMMA], ids=["bm", "gamma"])
def test_tail_monotonicity(model):
    xs, ts = [0.25, 0.5, 1.0, 2.0], [0.25, 0.5, 1.0, 2.0]
    sup = np.array([[float(sup_tail(model, x, t)) for t in ts] for x in xs])
    inf = np.array([[float(inf_tail(model, x, t)) for t in ts] for x in xs])
    for arr in (sup, inf):
        assert np.all(np.diff(arr, axis=1) >= -1e-12)  # nondecreasing in t
        assert np.all(np.diff(arr, axis=0) <= 1e-12)  # nonincreasing in x
        assert np.all((arr >= 0) & (arr <= 1))


def test_requires_density():
    with pytest.raises(NoDensityError):
        inf_tail(compound_poisson_minus_drift(1.0, 1.0, Exponential(0.5)), 1.0, 1.0)
    with pytest.raises(ValueError):
        inf_tail(BM, -1.0, 1.0)


# joint laws -------------------------------------------------------------------------


def test_sup_joint_brownian_closed_form():
    # the z-density of {sup > x, X_t in dz} for z < x is the Gaussian density at 2x - z
    for x, z, t in ((1.0, 0.0, 1.0), (0.5, -1.0, 2.0), (0.2, 0.1, 0.5)):
        exact = math.exp(-((2 * x - z) ** 2) / (2 * t)) / math.sqrt(2 * math.pi * t)
        assert float(sup_joint_density(BM, x, z, t)) == pytest.approx(exact, abs=1e-9)


def test_sup_joint_tends_to_marginal_at_diagonal():
    # as z -> x-, the joint density of (sup, X_t) tends to p_t(x)
    assert float(sup_joint_density(BM, 0.0, -1e-9, 1.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-6)
    brownian_limit = math.exp(-((1.0 + 1e-3) ** 2) / 2) / math.sqrt(2 * math.pi)  # reflection: p_t(2x - z)
    assert float(sup_joint_density(BM, 1.0, 1.0 - 1e-3, 1.0)) == pytest.approx(brownian_limit, rel=1e-6)
    p = math.exp(-2.0)  # Gamma(1,1) density of X_1 + 1 at 2
    assert float(sup_joint_density(GAMMA, 1.0, 1.0 - 1e-3, 1.0)) == pytest.approx(p, abs=5e-3)


@pytest.mark.parametrize("model", [BM, GAMMA], ids=["bm", "gamma"])
def test_duality_substitution(model):
    for x in (0.0, 0.5, 1.0):
        for z in (-0.5, -0.2, x - 0.3):
            a = float(sup_joint_density(model, x, z, 1.5))
            b = float(inf_joint_density(model, x - z, z, 1.5))
            assert a == pytest.approx(b, abs=1e-7)


@pytest.mark.parametrize("model", [BM, GAMMA], ids=["bm", "gamma"])
def test_inf_joint_marginalization(model):
    for x, t in ((0.5, 1.0), (1.0, 2.0)):
        body, _ = integrate.quad(lambda z: float(inf_joint_density(model, x, z, t)), -x, np.inf, epsabs=1e-11, limit=200)
        total = body + marginal(model, t).cdf(-x)
        assert total == pytest.approx(float(inf_tail(model, x, t)), abs=1e-4)


def test_query_types():
    assert float(joint_density(BM, JointLawQuery(1.0, 1.0, 0.0, "supremum"))) == float(sup_joint_density(BM, 1.0, 0.0, 1.0))
    assert float(joint_density(BM, JointLawQuery(1.0, 1.0, 0.0, "infimum"))) == float(inf_joint_density(BM, 1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        JointLawQuery(1.0, 1.0, 2.0, "supremum")
    with pytest.raises(ValueError):
        JointLawQuery(1.0, 1.0, -2.0, "infimum")
    with pytest.raises(ValueError):
        JointLawQuery(1.0, 1.0, 0.0, "sideways")
    with pytest.raises(ValueError):
        LaplaceQuery(-1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        LaplaceQuery(1.0, 1.0, 0.5)


# atoms --------------------------------------------------------------------------------


def test_atoms():
    assert float(sup_atom_total(pure_drift(3.0), 2.0)) == 1.0
    atom = sup_atom_total(BM, 1.0)
    assert float(atom) == 0.0 and not atom.applicable
    assert float(sup_atom_total(GAMMA, 1.0)) == pytest.approx(math.exp(-1.0), abs=1e-12)
    body, _ = integrate.quad(lambda z: float(sup_atom_density(GAMMA, 2.0, z)), -2.0, 0.0, epsabs=1e-12)
    assert body == pytest.approx(float(sup_atom_total(GAMMA, 2.0)), abs=1e-9)
    d = sup_atom_density(BM, 1.0, -0.5)
    assert float(d) == 0.0 and not d.applicable


# Laplace transforms and moments ---------------------------------------------------------


def test_laplace_transforms():
    for fn in (sup_laplace, inf_laplace):
        assert float(fn(BM, 0.0, 1.0)) == 1.0
        assert float(fn(GAMMA, 0.0, 1.0)) == pytest.approx(1.0, abs=1e-10)
    half_normal = 2.0 * math.exp(0.5) * special.ndtr(-1.0)
    assert float(sup_laplace(BM, 1.0, 1.0)) == pytest.approx(half_normal, abs=1e-10)
    assert float(inf_laplace(BM, 1.0, 1.0)) == pytest.approx(half_normal, abs=1e-10)
    values = [float(sup_laplace(GAMMA, lam, 1.0)) for lam in (0.25, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_gamma_laplace_against_tail_integral():
    # E[exp(-lam sup)] = 1 - lam ∫_0^inf e^{-lam x} P(sup > x) dx
    lam, t = 1.0, 1.0
    body, _ = integrate.quad(lambda x: math.exp(-lam * x) * float(sup_tail(GAMMA, x, t)), 0.0, 40.0, epsabs=1e-11, limit=200)
    assert float(sup_laplace(GAMMA, lam, t)) == pytest.approx(1.0 - lam * body, abs=1e-7)


def test_moments_brownian():
    assert float(sup_moment(BM, 1, 1.0)) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-10)
    assert float(sup_moment(BM, 2, 1.0)) == pytest.approx(1.0, abs=1e-10)
    assert float(inf_moment(BM, 1, 1.0)) == pytest.approx(float(sup_moment(BM, 1, 1.0)), abs=1e-6)
    with pytest.raises(ValueError):
        sup_moment(BM, 0, 1.0)


def test_gamma_inf_moment_against_tail():
    body, _ = integrate.quad(lambda x: float(inf_tail(GAMMA, x, 1.0)), 0.0, 1.0, epsabs=1e-11)
    assert float(inf_moment(GAMMA, 1, 1.0)) == pytest.approx(body, abs=1e-7)


def test_laplace_slope_is_mean():
    h = 1e-4
    L = [float(sup_laplace(GAMMA, k * h, 1.0)) for k in range(3)]
    slope = (3 * L[0] - 4 * L[1] + L[2]) / (2 * h)
    assert slope == pytest.approx(float(sup_moment(GAMMA, 1, 1.0)), abs=1e-3)


# the Φ identity ------------------------------------------------------------------------------


def test_big_phi_brownian():
    assert float(big_phi(BM, 0.0)) == 0.0
    for lam in (0.5, 2.0, 8.0):
        assert float(big_phi(BM, lam)) == pytest.approx(math.sqrt(2 * lam), abs=1e-6)
    assert float(laplace_p0(BM, 1.0)) == pytest.approx(1 / math.sqrt(2), abs=1e-8)


def test_phi_lambda_z_brownian():
    assert float(phi_lambda_z(BM, 2.0, -1.0)) == pytest.approx(math.exp(-2.0), abs=1e-6)
    assert float(phi_lambda_z(BM, 0.0, -1.0)) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("model", [BM, GAMMA], ids=["bm", "gamma"])
def test_phi_shapes(model):
    phis = [float(big_phi(model, lam)) for lam in (0.25, 0.5, 1.0, 2.0)]
    assert all(a < b for a, b in zip(phis, phis[1:]))
    vals = [float(phi_lambda_z(model, lam, -0.5)) for lam in (0.25, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_multiplicative_identity():
    for lam in (0.5, 2.0):
        for z in (-0.5, -1.5):
            assert abs(phi_identity_residual(BM, lam, z)) < 1e-6


def test_multiplicative_identity_bounded_variation():
    # with a downward drift the identity picks up the factor e^{z λ / c}
    for lam in (0.5, 2.0):
        for z in (-0.5, -1.5):
            rhs = float(phi_lambda_z(GAMMA, 0.0, z)) * math.exp(z * (float(big_phi(GAMMA, lam)) + lam / GAMMA.c))
            assert float(phi_lambda_z(GAMMA, lam, z)) == pytest.approx(rhs, rel=1e-6)


def test_gamma_phi_oracle():
    # for bounded variation with drift -c: φ(λ, z) = e^{z φ^{-1}(λ)} / |z| and Φ(λ) + λ/c = φ^{-1}(λ)
    from levyflux.models import inverse_laplace_exponent

    for lam in (0.5, 2.0):
        inv = inverse_laplace_exponent(GAMMA, lam)
        assert float(big_phi(GAMMA, lam)) + lam / GAMMA.c == pytest.approx(inv, abs=1e-6)
        assert float(phi_lambda_z(GAMMA, lam, -1.0)) == pytest.approx(math.exp(-inv), abs=1e-6)


def test_ode_residual_brownian():
    assert abs(phi_ode_residual(BM, 1.0, -0.5)) < 1e-6


def test_ode_residual_gamma():
    # the printed ODE misses the 1/c coming from the atom of the supremum at 0
    for lam, z in ((1.0, -0.5), (2.0, -1.0)):
        literal = phi_ode_residual(GAMMA, lam, z)
        assert literal == pytest.approx(z * float(phi_lambda_z(GAMMA, lam, z)) / GAMMA.c, abs=1e-6)
        assert abs(phi_ode_residual(GAMMA, lam, z, atom_term=True)) < 1e-4


# entrance laws ----------------------------------------------------------------------------------


def q_bm(t, x):
    return fpt_density(BM, x, t)


def test_entrance_residual_zero_candidate():
    res = entrance_law_residual(BM, lambda t, x: 0.0, 1.0, 0.5, -0.5)
    assert res.lhs == 0.0
    assert res.residual == pytest.approx(-res.rhs, abs=1e-15)
    assert abs(res.residual) > 0.01
    assert res.step == 1e-4


def test_entrance_residual_linear():
    one = entrance_law_residual(BM, q_bm, 1.0, 0.5, -0.5)
    two = entrance_law_residual(BM, lambda t, x: 2 * q_bm(t, x), 1.0, 0.5, -0.5)
    assert two.residual - one.residual == pytest.approx(one.lhs, abs=1e-9)


def test_entrance_residual_normalization():
    # with the excursion measure normalised as below, q* = 2 q solves the equation for Brownian motion
    for spot in ((1.0, 0.5, -0.5), (1.0, 1.0, 0.0), (2.0, 0.5, 0.25)):
        plain = entrance_law_residual(BM, q_bm, *spot)
        assert plain.rhs == pytest.approx(2 * plain.lhs, rel=1e-6)
        doubled = entrance_law_residual(BM, lambda t, x: 2 * q_bm(t, x), *spot)
        assert abs(doubled.residual) < 1e-3
        assert doubled.fd_err < 1e-6


def test_joint_law_from_entrance():
    for t, x, z in ((1.0, 0.5, -0.5), (2.0, 0.5, 0.25)):
        plain = float(joint_law_from_entrance(BM, q_bm, q_bm, t, x, z))
        assert plain == pytest.approx(0.5 * bm_joint_sup(x, z, t), abs=1e-8)
        doubled = float(joint_law_from_entrance(BM, q_bm, lambda s, y: 2 * q_bm(s, y), t, x, z))
        assert doubled == pytest.approx(bm_joint_sup(x, z, t), abs=2e-3)
    assert float(joint_law_from_entrance(BM, q_bm, q_bm, 1.0, 1.0, 1.0 - 1e-9)) < 1e-6
    grid = [float(joint_law_from_entrance(BM, q_bm, q_bm, 1.0, x, z)) for x in (0.2, 1.0) for z in (-1.0, 0.1)]
    assert min(grid) >= 0

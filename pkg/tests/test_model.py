import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sktshadow.errors import ContextInvalid, EpsilonZero, NonPositiveDenominator
from sktshadow.model import (EpsilonContext, Params, d_h_eps, d_nonlinearity, d_perturbation_terms,
                             h_eps, limiting_f2, nonlinearity, perturbation_terms, stable_increments)

LAM = np.pi**2
BETA_P = Params(a1=4.0, a2=2.0, b1=1.0, b2=1.0, beta=0.7)


def ctx_for(p, eps, lam=LAM):
    return EpsilonContext.create(p, 1, lam, eps)


def test_h_eps_at_zero_is_explicit(worked):
    u, wt = h_eps(2.0, 3.0, ctx_for(worked, 0.0), worked)
    assert u == pytest.approx(2.0 / 3.0, rel=1e-15)
    assert wt == 3.0


def test_h_eps_small_example():
    p = Params(a1=4.0, a2=2.0, b1=1.0, b2=1.0, beta=1.0)
    u, wt = h_eps(1.0, 3.0, EpsilonContext(1, 1.0, 1.0, 1.0), p)
    # w~ solves w~^2 + (eps - D) w~ - eps*psi = 0 with D = 2, eps = 1, psi = 3
    assert wt == pytest.approx((1.0 + np.sqrt(13.0)) / 2.0, rel=1e-15)
    assert u == pytest.approx(1.0 / (1.0 + wt), rel=1e-15)


positive = st.floats(1e-3, 1e3)
eps_st = st.one_of(st.just(0.0), st.floats(1e-12, 1.0))


@settings(max_examples=300, deadline=None)
@given(phi=positive, gap=positive, eps=eps_st, beta=st.floats(0.0, 3.0))
def test_round_trip_within_8_ulps(phi, gap, eps, beta):
    p = BETA_P.replace(beta=beta)
    psi = beta * phi + gap
    u, wt = h_eps(phi, psi, EpsilonContext(1, LAM, eps, 1.0), p)
    assert u > 0 and wt > 0
    assert abs((eps + wt) * u - phi) <= 8 * np.spacing(phi)
    assert abs((1 + beta * u) * wt - psi) <= 8 * np.spacing(psi)


@settings(max_examples=200, deadline=None)
@given(phi=positive, gap=positive, eps=st.floats(1e-12, 1.0), beta=st.floats(0.0, 3.0))
def test_increments_bounded_by_largest_term(phi, gap, eps, beta):
    # h0 + eps*rho reproduces h_eps up to rounding of the largest of the three terms
    psi = beta * phi + gap
    u, wt = h_eps(phi, psi, EpsilonContext(1, LAM, eps, 1.0), BETA_P.replace(beta=beta))
    r1, r2 = stable_increments(phi, psi, eps, beta)
    gap = psi - beta * phi  # the gap actually represented by the rounded psi
    h10, h20 = phi / gap, gap
    assert abs(h10 + eps * r1 - u) <= 8 * np.spacing(max(h10, abs(eps * r1), u))
    assert abs(h20 + eps * r2 - wt) <= 8 * np.spacing(max(h20, abs(eps * r2), wt))


def test_increments_pinned_sample():
    for e in np.logspace(-12, 0, 121):
        u, wt = h_eps(1.0, 3.0, EpsilonContext(1, 1.0, float(e), 1.0), BETA_P.replace(beta=1.0))
        r1, r2 = stable_increments(1.0, 3.0, e, 1.0)
        assert abs(0.5 + e * r1 - u) <= 4 * np.spacing(u)
        assert abs(2.0 + e * r2 - wt) <= 4 * np.spacing(wt)


def test_increments_at_zero_are_eps_derivatives():
    phi, psi, beta = 1.3, 2.9, 0.7
    p = BETA_P.replace(beta=beta)
    r1, r2 = stable_increments(phi, psi, 0.0, beta)
    h = 1e-7
    u1, w1 = h_eps(phi, psi, EpsilonContext(1, LAM, h, 1.0), p)
    u0, w0 = h_eps(phi, psi, EpsilonContext(1, LAM, 0.0, 1.0), p)
    assert r1 == pytest.approx((u1 - u0) / h, rel=1e-5)
    assert r2 == pytest.approx((w1 - w0) / h, rel=1e-5)


def test_outside_cone_rejected(worked):
    with pytest.raises(NonPositiveDenominator):
        h_eps(1.0, -1.0, ctx_for(worked, 0.0), worked)
    with pytest.raises(NonPositiveDenominator):
        stable_increments(1.0, 0.5, 0.1, 1.0)


def test_context_validation(worked):
    with pytest.raises(ContextInvalid):
        EpsilonContext.create(worked, 1, LAM, -1e-3)
    with pytest.raises(ContextInvalid):
        EpsilonContext.create(worked, 1, LAM, worked.a2 / LAM)
    ctx = ctx_for(worked, 1e-2)
    assert ctx.inv_d2(worked) == pytest.approx(1.0 / ctx.d2, rel=1e-14)


def test_params_validation():
    with pytest.raises(ValueError):
        Params(a1=1.0, a2=0.0, b1=1.0, b2=1.0)
    with pytest.raises(ValueError):
        Params(a1=-1.0, a2=1.0, b1=1.0, b2=1.0)
    p = Params(a1=4.0, a2=2.0, b1=1.0, b2=1.0, beta=0.5)
    assert p.A == 2.0 and p.B == 1.0 and p.kernel_slope == 1.0


def naive_f2(phi, psi, eps, p, lam):
    """Uncompensated second reaction term, evaluated in 50-digit arithmetic."""
    with mp.workdps(50):
        phi, psi, eps, lam = map(mp.mpf, (phi, psi, eps, lam))
        D = psi - p.beta * phi
        S = mp.sqrt((D + eps) ** 2 + 4 * eps * p.beta * phi)
        wt = (D - eps + S) / 2
        u = phi / (eps + wt)
        d2 = p.a2 / lam - eps
        c = p.beta + mp.mpf(p.b2) / p.a2
        return float((wt * (p.a2 - p.b2 * u) / d2 - lam * psi + c * lam * phi) / eps)


@pytest.mark.parametrize("eps", [1e-6, 1e-3, 0.05])
@pytest.mark.parametrize("beta", [0.0, 0.7])
def test_compensated_f2_matches_high_precision(eps, beta):
    p = BETA_P.replace(beta=beta)
    for phi, gap in [(1.0, 2.0), (0.3, 0.1), (4.0, 5.0)]:
        psi = beta * phi + gap
        f2 = nonlinearity(phi, psi, ctx_for(p, eps), p)[1]
        ref = naive_f2(phi, psi, eps, p, LAM)
        assert f2 == pytest.approx(ref, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("beta", [0.0, 0.7])
def test_f2_limit_matches_closed_form(beta):
    p = BETA_P.replace(beta=beta)
    phi, psi = 1.1, beta * 1.1 + 2.3
    at0 = nonlinearity(phi, psi, ctx_for(p, 0.0), p)[1]
    assert at0 == pytest.approx(limiting_f2(phi, psi, LAM, p), rel=1e-13)
    # Richardson extrapolation of positive-eps values towards zero
    f = lambda e: nonlinearity(phi, psi, ctx_for(p, e), p)[1]
    h = 1e-5
    assert 2 * f(h / 2) - f(h) == pytest.approx(at0, rel=1e-8)


def test_f1_matches_logistic(worked):
    phi, psi, eps = 1.5, 2.0, 1e-2
    u, _ = h_eps(phi, psi, ctx_for(worked, eps), worked)
    f1 = nonlinearity(phi, psi, ctx_for(worked, eps), worked)[0]
    assert f1 == pytest.approx(u * (worked.a1 - worked.b1 * u) / worked.d1, rel=1e-14)


def _fd(fun, phi, psi, h=1e-6):
    cols = []
    for dphi, dpsi in ((h, 0.0), (0.0, h)):
        plus = np.array(fun(phi + dphi, psi + dpsi))
        minus = np.array(fun(phi - dphi, psi - dpsi))
        cols.append((plus - minus) / (2 * h))
    return np.stack(cols, axis=1)


@pytest.mark.parametrize("eps", [0.0, 1e-8, 1e-3, 0.2])
@pytest.mark.parametrize("beta", [0.0, 0.7])
def test_derivatives_against_finite_differences(eps, beta):
    p = BETA_P.replace(beta=beta)
    ctx = ctx_for(p, eps)
    phi, psi = 0.9, beta * 0.9 + 1.7
    assert np.allclose(d_h_eps(phi, psi, ctx, p), _fd(lambda a, b: h_eps(a, b, ctx, p), phi, psi),
                       rtol=1e-7, atol=1e-8)
    assert np.allclose(d_nonlinearity(phi, psi, ctx, p),
                       _fd(lambda a, b: nonlinearity(a, b, ctx, p), phi, psi), rtol=1e-6, atol=1e-6)
    if eps > 0:
        assert np.allclose(d_perturbation_terms(phi, psi, ctx, p),
                           _fd(lambda a, b: perturbation_terms(a, b, ctx, p), phi, psi),
                           rtol=1e-6, atol=1e-6)


def test_vectorised_shapes(worked):
    phi = np.linspace(0.5, 2.0, 7)
    psi = phi + 1.0
    ctx = ctx_for(worked, 1e-3)
    assert d_nonlinearity(phi, psi, ctx, worked).shape == (2, 2, 7)
    assert nonlinearity(phi, psi, ctx, worked)[1].shape == (7,)


def test_perturbation_terms(worked):
    with pytest.raises(EpsilonZero):
        perturbation_terms(1.0, 2.0, ctx_for(worked, 0.0), worked)
    ctx = ctx_for(worked, 1e-2)
    u, wt = h_eps(1.0, 2.0, ctx, worked)
    r1, r2 = perturbation_terms(1.0, 2.0, ctx, worked)
    assert r1 == pytest.approx(u * wt)
    assert r2 == pytest.approx(wt**2 * LAM / (1e-2 * (2.0 - 1e-2 * LAM)))
    zero = worked.replace(c1=0.0, c2=0.0)
    assert perturbation_terms(1.0, 2.0, ctx, zero) == (0.0, 0.0)


def test_mutated_f2_is_detected():
    # flipping the sign of the lambda^2 part of the limit breaks agreement with the oracle
    p = BETA_P
    phi, psi = 1.0, p.beta + 2.0
    good = limiting_f2(phi, psi, LAM, p)
    gap = psi - p.beta * phi
    mutated = -LAM**2 / p.a2 * gap - LAM**2 * p.b2 / p.a2**2 * phi + p.kernel_slope * LAM * phi / gap
    ref = naive_f2(phi, psi, 1e-9, p, LAM)
    assert good == pytest.approx(ref, rel=1e-6)
    assert abs(mutated - ref) > 1e-2 * abs(ref)

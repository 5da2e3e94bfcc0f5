import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import quad

from sktshadow import reduction
from sktshadow.basis import Domain1D, neumann_eigenpair
from sktshadow.errors import OutOfBracket, RatioNotAboveOne
from sktshadow.model import Params


def closed_form(mu, k):
    a = np.sqrt(2) * mu
    return {1: (1 - a * a) ** -0.5, 2: (1 - a * a) ** -1.5, 3: (1 + a * a / 2) * (1 - a * a) ** -2.5}[k]


@pytest.mark.parametrize("j", [1, 2, 3])
@pytest.mark.parametrize("mu", [-0.65, -0.5, -0.25, 0.25, 0.5, 0.65])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_moments_closed_form(j, mu, k):
    mode = neumann_eigenpair(Domain1D(1.0, 256), j)
    assert reduction.moment(mode, mu, k) == pytest.approx(closed_form(mu, k), rel=1e-10)


def test_weighted_moment_against_quad(mode256):
    mu = 0.4
    ref, _ = quad(lambda x: mode256.profile(x) / (1 + mu * mode256.profile(x)) ** 2, 0, 1,
                  epsrel=1e-13, limit=200)
    assert reduction.moment(mode256, mu, 2, weighted=True) == pytest.approx(ref, rel=1e-10)


def test_hj_properties(mode256):
    assert reduction.hj(0.0, mode256) == 1.0
    mus = np.linspace(0.05, 0.69, 12)
    vals = [reduction.hj(m, mode256) for m in mus]
    assert np.all(np.diff(vals) > 0)
    # even in mu for j = 1 on the unit interval
    assert reduction.hj(0.3, mode256) == pytest.approx(reduction.hj(-0.3, mode256), rel=1e-12)
    with pytest.raises(OutOfBracket):
        reduction.hj(0.8, mode256)


@pytest.mark.parametrize("mu", [-0.55, 0.2, 0.6])
def test_hj_prime_against_fd(mode256, mu):
    h = 1e-6
    fd = (reduction.hj(mu + h, mode256) - reduction.hj(mu - h, mode256)) / (2 * h)
    assert reduction.hj_prime(mu, mode256) == pytest.approx(fd, rel=1e-7)


def test_worked_roots(worked, mode256):
    mu_m, mu_p = reduction.solve_mu(worked, mode256)
    assert mu_m == pytest.approx(-0.5, abs=1e-10)
    assert mu_p == pytest.approx(0.5, abs=1e-10)
    assert reduction.hj(mu_p, mode256) == pytest.approx(worked.A / worked.B, rel=1e-12)


def test_ratio_not_above_one(mode256):
    with pytest.raises(RatioNotAboveOne):
        reduction.solve_mu(Params(a1=1.0, a2=2.0, b1=1.0, b2=1.0), mode256)


def s0_reference(p, mu):
    """Leading amplitude in 30-digit arithmetic with the closed-form moment."""
    with mp.workdps(30):
        lam = mp.pi**2
        a = mp.sqrt(2) * mp.mpf(mu)
        I1 = 1 / mp.sqrt(1 - a * a)
        k = mp.mpf(p.a2) ** 2 * (p.a2 * p.beta + p.b2) / (mp.mpf(p.b2) ** 2 * mu**2)
        t1 = p.a1 * k / (p.d1 * lam**2) * (1 - mp.mpf(p.B) / p.A * I1)
        t2 = k / lam * (I1 - 1)
        return float(t1 + t2)


def test_s0_against_high_precision(worked, mode256):
    s0 = reduction.s_leading(worked, mode256, 0.5)
    assert s0 == pytest.approx(s0_reference(worked, mp.mpf("0.5")), rel=1e-11)
    assert s0 == pytest.approx(0.8639352762844, rel=1e-11)


def test_reduced_equations_vanish_at_root(worked, mode256):
    for sign in (1, -1):
        root = reduction.reduce(worked, mode256, sign)
        g1, g2 = reduction.g_scalar(root.s0, root.mu0, worked, mode256)
        assert abs(g1) < 1e-10 and abs(g2) < 1e-9


@pytest.mark.parametrize("mu", [-0.4, 0.3, 0.6])
def test_g2_forms_agree(worked, mode256, mu):
    p = worked.replace(beta=0.5)
    a = reduction.g2(0.7, mu, p, mode256)
    b = reduction.g2_reciprocal_form(0.7, mu, p, mode256)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_g_derivatives_against_fd(worked, mode256):
    s, mu, h = 0.8, 0.45, 1e-6
    g1_mu, g2_s, g2_mu = reduction.g_derivatives(s, mu, worked, mode256)
    fd1 = (reduction.g1(mu + h, worked, mode256) - reduction.g1(mu - h, worked, mode256)) / (2 * h)
    fd2s = (reduction.g2(s + h, mu, worked, mode256) - reduction.g2(s - h, mu, worked, mode256)) / (2 * h)
    fd2m = (reduction.g2(s, mu + h, worked, mode256) - reduction.g2(s, mu - h, worked, mode256)) / (2 * h)
    assert g1_mu == pytest.approx(fd1, rel=1e-7)
    assert g2_s == pytest.approx(fd2s, rel=1e-7)
    assert g2_mu == pytest.approx(fd2m, rel=1e-6)


def test_worked_report(worked, mode256):
    root = reduction.reduce(worked, mode256, 1)
    lower = worked.A * np.pi**4 * (1 - worked.B / worked.A) * closed_form(0.5, 2)
    assert root.lower_bound == pytest.approx(lower, rel=1e-10)
    assert root.lower_bound == pytest.approx(2 * np.sqrt(2) * np.pi**4, rel=1e-10)
    assert root.det_value > root.lower_bound
    assert reduction.c0_bracket(mode256, worked, 0.5) == pytest.approx(-2 * np.sqrt(2), abs=1e-8)
    assert root.c0 < 0
    rep = root.report()
    assert all(v["holds"] and v["margin"] > 0 for v in rep["inequalities"].values())
    assert rep["sign"] == "+"


def test_reduction_is_symmetric_under_reflection(worked, mode256):
    plus, minus = (reduction.reduce(worked, mode256, s) for s in (1, -1))
    assert minus.mu0 == pytest.approx(-plus.mu0, abs=1e-12)
    assert minus.s0 == pytest.approx(plus.s0, rel=1e-10)


def test_ansatz_fields(worked, mode256):
    root = reduction.reduce(worked, mode256, 1)
    Phi0, PhiStar0, u0, w0 = reduction.build_ansatz(root, worked, mode256)
    ell = mode256.ell(root.mu0)
    assert np.allclose(u0, 2.0 / ell)
    assert np.allclose(w0, 0.5 * root.s0 * ell)
    assert np.allclose(Phi0.first, root.s0)
    from sktshadow.basis import kernel_coordinates
    assert max(map(abs, kernel_coordinates(PhiStar0.coeffs, mode256, worked))) < 1e-12

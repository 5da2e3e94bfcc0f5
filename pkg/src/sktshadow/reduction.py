"""Limiting (eps = 0) reduced equations of the blow-up branch.

With ``ell(x) = 1 + mu phi_j(x)`` the kernel coordinates ``(s, mu)`` of the
limiting solution solve two scalar equations ``g1(mu) = 0`` and
``g2(s, mu) = 0``.  The first one is equivalent to ``h_j(mu) = A/B`` with

    h_j(mu) = int ell^-2 / int ell^-1,

which has exactly one root on each side of zero inside ``(m_j, M_j)``.
All integrals here use the closed-form ``phi_j`` and an adaptive midpoint
rule, so they are not limited by the collocation grid.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .basis import EigenMode, FieldPair, adaptive_integral, project_P, solve_L_X0
from .errors import (BracketFailure, DegenerateRoot, NonPositiveAmplitude, OutOfBracket,
                     PositivityLoss, RatioNotAboveOne)
from .model import Params

QUAD_RTOL = 1e-12


def _check_bracket(mu, mode):
    if not mode.m_j < mu < mode.M_j:
        raise OutOfBracket(f"mu={mu} outside ({mode.m_j}, {mode.M_j})")


def moment(mode: EigenMode, mu: float, k: int, weighted: bool = False) -> float:
    """``int ell^-k`` (or ``int phi_j ell^-k`` when ``weighted``) over the domain."""
    if weighted:
        fn = lambda x: mode.profile(x) / (1.0 + mu * mode.profile(x)) ** k
    else:
        fn = lambda x: (1.0 + mu * mode.profile(x)) ** (-k)
    return adaptive_integral(fn, mode.dom.length, mode.dom.n, rtol=QUAD_RTOL)


def hj(mu: float, mode: EigenMode) -> float:
    _check_bracket(mu, mode)
    if mu == 0.0:
        return 1.0
    return moment(mode, mu, 2) / moment(mode, mu, 1)


def hj_prime(mu: float, mode: EigenMode) -> float:
    """Analytic derivative of :func:`hj`."""
    _check_bracket(mu, mode)
    I1, I2 = moment(mode, mu, 1), moment(mode, mu, 2)
    J2, J3 = moment(mode, mu, 2, True), moment(mode, mu, 3, True)
    return (-2.0 * J3 * I1 + I2 * J2) / I1**2


def solve_mu(p: Params, mode: EigenMode):
    """Roots ``mu_minus < 0 < mu_plus`` of ``h_j(mu) = A/B``."""
    ratio = p.A / p.B if p.B > 0 else np.inf
    if not ratio > 1.0:
        raise RatioNotAboveOne(f"A/B = {ratio} must exceed 1")
    width = mode.M_j - mode.m_j
    brackets = [(mode.m_j + 1e-6 * width, -1e-8), (1e-8, mode.M_j - 1e-6 * width)]
    roots = []
    for lo, hi in brackets:
        f = lambda mu: hj(mu, mode) - ratio
        flo, fhi = f(lo), f(hi)
        if not flo * fhi < 0:
            raise BracketFailure(f"h_j - A/B does not change sign on [{lo}, {hi}]")
        mu = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        for _ in range(3):
            step = f(mu) / hj_prime(mu, mode)
            mu -= step
            if abs(step) <= 1e-16 * max(1.0, abs(mu)):
                break
        roots.append(mu)
    return roots[0], roots[1]


def s_leading(p: Params, mode: EigenMode, mu0: float) -> float:
    """Limiting amplitude ``s0`` solving ``g2(s, mu0) = 0``."""
    lam, vol = mode.lambda_j, mode.dom.length
    I1 = moment(mode, mu0, 1)
    k = p.a2**2 * (p.a2 * p.beta + p.b2) / (p.b2**2 * mu0**2)
    term1 = p.a1 * k / (p.d1 * lam**2) * (vol - p.B / p.A * I1)
    term2 = k / lam * (I1 - vol)
    s = term1 + term2
    if not s > 0:
        raise NonPositiveAmplitude(f"s0 = {s} is not positive")
    return s


def g1(mu: float, p: Params, mode: EigenMode) -> float:
    _check_bracket(mu, mode)
    ba = p.B / p.A
    vol = mode.dom.length
    return p.a1 * p.a2 / (p.b2 * p.d1 * vol) * (moment(mode, mu, 1) - ba * moment(mode, mu, 2))


def g2(s: float, mu: float, p: Params, mode: EigenMode) -> float:
    """Second reduced equation, in the phi_j-weighted form (regular at mu = 0)."""
    _check_bracket(mu, mode)
    lam = mode.lambda_j
    J1, J2 = moment(mode, mu, 1, True), moment(mode, mu, 2, True)
    q = (p.a2 * p.beta + p.b2) / p.b2
    first = -q / p.d1 * (p.a1 * J1 - p.a2 * p.b1 / p.b2 * J2)
    return first + s * lam**2 * p.b2 * mu / p.a2**2 + lam * q * J1


def g2_reciprocal_form(s: float, mu: float, p: Params, mode: EigenMode) -> float:
    """Same as :func:`g2` after eliminating the weighted integrals (singular at mu = 0)."""
    _check_bracket(mu, mode)
    lam, vol, ba = mode.lambda_j, mode.dom.length, p.B / p.A
    I1, I2 = moment(mode, mu, 1), moment(mode, mu, 2)
    q = (p.a2 * p.beta + p.b2) / (p.b2 * mu)
    return (s * mu * lam**2 * p.b2 / p.a2**2
            + q * p.a1 / p.d1 * (-vol + ba * I1)
            + q * lam * (vol - I1)
            + q * p.a1 / p.d1 * (I1 - ba * I2))


def g_scalar(s: float, mu: float, p: Params, mode: EigenMode):
    return g1(mu, p, mode), g2(s, mu, p, mode)


def g_derivatives(s: float, mu: float, p: Params, mode: EigenMode):
    """``(dg1/dmu, dg2/ds, dg2/dmu)`` by differentiating under the integral."""
    lam, vol, ba = mode.lambda_j, mode.dom.length, p.B / p.A
    J2, J3 = moment(mode, mu, 2, True), moment(mode, mu, 3, True)
    K2 = adaptive_integral(lambda x: mode.profile(x) ** 2 / (1 + mu * mode.profile(x)) ** 2,
                           vol, mode.dom.n, rtol=QUAD_RTOL)
    K3 = adaptive_integral(lambda x: mode.profile(x) ** 2 / (1 + mu * mode.profile(x)) ** 3,
                           vol, mode.dom.n, rtol=QUAD_RTOL)
    g1_mu = p.a1 * p.a2 / (p.b2 * p.d1 * vol) * (-J2 + 2.0 * ba * J3)
    g2_s = lam**2 * p.b2 * mu / p.a2**2
    q = (p.a2 * p.beta + p.b2) / p.b2
    g2_mu = (-q / p.d1 * (-p.a1 * K2 + 2.0 * p.a2 * p.b1 / p.b2 * K3)
             + s * lam**2 * p.b2 / p.a2**2 - lam * q * K2)
    return g1_mu, g2_s, g2_mu


def c0_bracket(mode: EigenMode, p: Params, mu0: float) -> float:
    """``int [(B/A + 1) ell^-2 - (2B/A) ell^-3]``, negative at a valid root."""
    ba = p.B / p.A
    return (ba + 1.0) * moment(mode, mu0, 2) - 2.0 * ba * moment(mode, mu0, 3)


def c0_constant(mode: EigenMode, p: Params, mu0: float, s0: float) -> float:
    vol = mode.dom.length
    return p.a2**2 * p.a1 / (p.d1 * p.b2**2 * s0 * vol) * c0_bracket(mode, p, mu0)


@dataclass(frozen=True)
class ReducedRoot:
    j: int
    sign: int
    mu0: float
    s0: float
    I1: float
    I2: float
    I3: float
    det_value: float
    lower_bound: float
    c0: float
    margins: tuple

    def report(self) -> dict:
        d = asdict(self)
        d["sign"] = "+" if self.sign > 0 else "-"
        d["inequalities"] = {k: {"holds": bool(v > 0), "margin": v}
                             for k, v in zip(("i", "ii", "iii"), d.pop("margins"))}
        return d


def nondegeneracy(root: ReducedRoot, p: Params, mode: EigenMode):
    """Determinant ``-g1_mu * g2_s`` of the reduced Jacobian and its lower bound."""
    g1_mu, g2_s, _ = g_derivatives(root.s0, root.mu0, p, mode)
    det = -g1_mu * g2_s
    vol = mode.dom.length
    lower = p.A * mode.lambda_j**2 * (1.0 - p.B / p.A) * root.I2 / (p.d1 * vol)
    if not det > 0 or det < lower * (1.0 - 1e-8):
        raise DegenerateRoot(f"determinant {det} below bound {lower}")
    return det, lower


def reduce(p: Params, mode: EigenMode, sign: int) -> ReducedRoot:
    """Full limiting reduction for one sign (+1 or -1)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    mu_m, mu_p = solve_mu(p, mode)
    mu0 = mu_p if sign > 0 else mu_m
    s0 = s_leading(p, mode, mu0)
    I1, I2, I3 = (moment(mode, mu0, k) for k in (1, 2, 3))
    vol, ratio = mode.dom.length, p.A / p.B
    margins = (I1 - vol, ratio * vol - I1, I3 - ratio * I2)
    root = ReducedRoot(j=mode.j, sign=sign, mu0=mu0, s0=s0, I1=I1, I2=I2, I3=I3,
                       det_value=np.nan, lower_bound=np.nan,
                       c0=c0_constant(mode, p, mu0, s0), margins=margins)
    det, lower = nondegeneracy(root, p, mode)
    return ReducedRoot(**{**root.__dict__, "det_value": det, "lower_bound": lower})


def report_json(root: ReducedRoot) -> str:
    return json.dumps(root.report(), indent=2, sort_keys=True)


def limiting_forcing(s: float, mu: float, p: Params, mode: EigenMode) -> FieldPair:
    """``F0(s, mu)`` sampled on the collocation grid, from its mu-parameterized form."""
    ell = mode.ell(mu)
    lam = mode.lambda_j
    u0 = p.a2 / (p.b2 * ell)
    f1 = u0 * (p.a1 - p.b1 * u0) / p.d1
    f2 = s * lam**2 * p.b2 / p.a2**2 * mu * mode.phi + lam * (p.a2 * p.beta + p.b2) / (p.b2 * ell)
    return FieldPair.from_nodal(mode.dom, np.vstack([f1, f2]), "residual")


def build_ansatz(root: ReducedRoot, p: Params, mode: EigenMode):
    """Leading profile ``Phi0``, its correction ``Phi*0`` and the limiting physical fields.

    Returns ``(Phi0, PhiStar0, u0, w0_scaled)`` where ``w0_scaled`` is the
    limit of ``eps * w``.
    """
    ell = mode.ell(root.mu0)
    bad = np.flatnonzero(ell <= 0)
    if bad.size:
        raise PositivityLoss("1 + mu0*phi_j is not positive", node=int(bad[0]))
    s0 = root.s0
    psi0 = s0 * (p.beta + p.b2 / p.a2 * ell)
    Phi0 = FieldPair.from_nodal(mode.dom, np.vstack([np.full_like(ell, s0), psi0]))
    F0 = limiting_forcing(s0, root.mu0, p, mode)
    _, _, rem = project_P(F0, mode, p)
    PhiStar0 = -solve_L_X0(rem, mode, p)
    u0 = p.a2 / (p.b2 * ell)
    w0_scaled = p.b2 / p.a2 * s0 * ell
    return Phi0, PhiStar0, u0, w0_scaled

"""Scalar parameters and the pointwise kinematics of the blow-up change of variables.

The shadow system is written in the rescaled unknowns

    w~ = eps * w,    phi = (eps + w~) * u,    psi = (1 + beta * u) * w~,

with ``eps = a2 / lambda_j - d2``.  Everything here is pointwise and
vectorised: ``phi`` and ``psi`` may be scalars or numpy arrays of the same
shape, and every function returns arrays of that shape.

The reaction term of the psi-equation carries an explicit ``1/eps``; it is
never evaluated in that form.  :func:`nonlinearity` uses the exact increments
``rho1 = (h1_eps - h10)/eps`` and ``rho2 = (h2_eps - h20)/eps`` whose closed
forms contain no cancellation, so ``eps`` may go all the way to zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContextInvalid, EpsilonZero, NonPositiveDenominator


@dataclass(frozen=True)
class Params:
    """Rate constants of the SKT competition model.

    ``A > B`` is needed by the reduction but is not enforced here.
    """

    a1: float
    a2: float
    b1: float
    b2: float
    c1: float = 1.0
    c2: float = 1.0
    d1: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("a2", "b2", "d1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("a1", "b1", "c1", "c2", "beta"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)!r}")

    @property
    def A(self) -> float:
        return self.a1 / self.a2

    @property
    def B(self) -> float:
        return self.b1 / self.b2

    @property
    def C(self) -> float:
        return self.c1 / self.c2 if self.c2 > 0 else np.inf

    @property
    def kernel_slope(self) -> float:
        """``beta + b2/a2``, the psi-component of the constant kernel vector."""
        return self.beta + self.b2 / self.a2

    def replace(self, **changes) -> "Params":
        data = {k: getattr(self, k) for k in ("a1", "a2", "b1", "b2", "c1", "c2", "d1", "beta")}
        data.update(changes)
        return Params(**data)


@dataclass(frozen=True)
class EpsilonContext:
    """Distance ``eps = a2/lambda_j - d2`` to the blow-up point of mode ``j``."""

    j: int
    lambda_j: float
    eps: float
    d2: float

    def __post_init__(self):
        if self.eps < 0:
            raise ContextInvalid(f"eps must be nonnegative, got {self.eps}")
        if not self.d2 > 0:
            raise ContextInvalid(f"d2 = a2/lambda_j - eps must stay positive, got {self.d2}")

    @classmethod
    def create(cls, p: Params, j: int, lambda_j: float, eps: float) -> "EpsilonContext":
        return cls(j=j, lambda_j=lambda_j, eps=float(eps), d2=p.a2 / lambda_j - float(eps))

    def inv_d2(self, p: Params) -> float:
        # 1/d2 written through eps so that eps stays the only continuation knob
        return self.lambda_j / (p.a2 - self.eps * self.lambda_j)


def _positive_gap(phi, psi, beta):
    gap = psi - beta * phi
    if np.any(~(gap > 0)):
        raise NonPositiveDenominator("psi - beta*phi must be positive (state outside the positive cone)")
    return gap


def _root_S(gap, eps, beta, phi):
    return np.sqrt((gap + eps) ** 2 + 4.0 * eps * beta * phi)


def _root_Q(gap, eps, psi, S):
    """``D - eps + S`` without cancellation, using ``S^2 - (D - eps)^2 = 4 eps psi``."""
    lead = gap - eps
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lead >= 0, lead + S, 4.0 * eps * psi / (S - lead))


def h_eps(phi, psi, ctx: EpsilonContext, p: Params):
    """Invert the change of variables: return ``(u, w~)`` for given ``(phi, psi)``.

    ``w~`` is the positive root of ``w~^2 + (eps - D) w~ - eps*psi = 0`` with
    ``D = psi - beta*phi``; the branch of the quadratic formula is picked so
    that no subtraction of nearly equal numbers occurs.
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    eps, beta = ctx.eps, p.beta
    gap = psi - beta * phi
    if eps == 0.0:
        gap = _positive_gap(phi, psi, beta)
        return phi / gap, gap
    S = _root_S(gap, eps, beta, phi)
    if np.any(~(gap + eps + S > 0)):
        raise NonPositiveDenominator("psi - beta*phi + eps + sqrt(...) <= 0")
    lead = gap - eps
    with np.errstate(divide="ignore", invalid="ignore"):
        wt = np.where(lead >= 0, 0.5 * (lead + S), 2.0 * eps * psi / (S - lead))
    u = phi / (eps + wt)
    return u, wt


def stable_increments(phi, psi, eps, beta):
    """Exact first-order increments ``rho1 = (h1_eps - h10)/eps``, ``rho2 = (h2_eps - h20)/eps``.

    Both are computed from cancellation-free closed forms, valid for every
    ``eps >= 0`` (at ``eps = 0`` they reduce to the eps-derivatives of the
    limiting maps).
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    gap = _positive_gap(phi, psi, beta)
    S = _root_S(gap, eps, beta, phi)
    rho1 = -4.0 * phi * psi / (gap * (gap + eps + S) * _root_Q(gap, eps, psi, S))
    rho2 = 2.0 * beta * phi / (S + gap + eps)
    return rho1, rho2


def nonlinearity(phi, psi, ctx: EpsilonContext, p: Params):
    """Reaction terms ``(f1, f2)`` of the rescaled stationary system.

    ``f2`` uses the compensated expansion

        f2 = lam/(a2 (a2 - eps lam)) * (lam X + a2 Y - eps a2 b2 rho1 rho2),

    where ``X = h20 (a2 - b2 h10)`` and ``Y = rho2 (a2 - b2 h10) - b2 h20 rho1``.
    At ``eps = 0`` it returns the limit ``f2^0`` exactly.
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    lam, eps = ctx.lambda_j, ctx.eps
    if not p.a2 - eps * lam > 0:
        raise ContextInvalid("d2 must be positive")
    gap = _positive_gap(phi, psi, p.beta)
    rho1, rho2 = stable_increments(phi, psi, eps, p.beta)
    h10 = phi / gap
    h1 = h10 + eps * rho1
    f1 = h1 * (p.a1 - p.b1 * h1) / p.d1
    X = p.a2 * gap - p.b2 * phi  # h20 * (a2 - b2*h10)
    Y = rho2 * (p.a2 - p.b2 * h10) - p.b2 * gap * rho1
    kappa = lam / (p.a2 * (p.a2 - eps * lam))
    f2 = kappa * (lam * X + p.a2 * Y - eps * p.a2 * p.b2 * rho1 * rho2)
    return f1, f2


def perturbation_terms(phi, psi, ctx: EpsilonContext, p: Params):
    """Competition remainders ``(r1, r2)`` multiplying ``eta = 1/alpha``.

    Dividing the u-equation by ``d1/eps`` turns ``eta c1 u w`` into
    ``eta c1 h1 h2 / d1`` (no extra factor of eps); the w-equation gives
    ``r2 = c2 lam h2^2 / (eps (a2 - eps lam))``.
    """
    if ctx.eps <= 0:
        raise EpsilonZero("the competition remainder r2 is undefined at eps = 0")
    u, wt = h_eps(phi, psi, ctx, p)
    lam, eps = ctx.lambda_j, ctx.eps
    r1 = p.c1 * u * wt / p.d1
    r2 = p.c2 * wt**2 * lam / (eps * (p.a2 - eps * lam))
    return r1, r2


def _derivative_pieces(phi, psi, ctx, p):
    eps, beta = ctx.eps, p.beta
    u, wt = h_eps(phi, psi, ctx, p)
    gap = psi - beta * phi
    S = _root_S(gap, eps, beta, phi)
    return u, wt, gap, S


def d_h_eps(phi, psi, ctx: EpsilonContext, p: Params):
    """Jacobian of ``(phi, psi) -> (u, w~)``.

    Returns an array of shape ``(2, 2) + phi.shape`` ordered
    ``[[du/dphi, du/dpsi], [dw~/dphi, dw~/dpsi]]``.  Obtained by implicit
    differentiation of the quadratic for ``w~``, whose derivative in ``w~``
    equals ``S = sqrt((D+eps)^2 + 4 eps beta phi)``.
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    u, wt, _, S = _derivative_pieces(phi, psi, ctx, p)
    eps, beta = ctx.eps, p.beta
    w_phi = -beta * wt / S
    w_psi = (wt + eps) / S
    u_phi = (1.0 + u * beta * wt / S) / (eps + wt)
    u_psi = -u / S
    return np.array([[u_phi, u_psi], [w_phi, w_psi]])


def d_nonlinearity(phi, psi, ctx: EpsilonContext, p: Params):
    """Jacobian ``F'`` of ``(f1, f2)`` with respect to ``(phi, psi)``, shape ``(2, 2) + shape``.

    ``f1'`` follows from :func:`d_h_eps` by the chain rule.  ``f2'`` is the
    derivative of the compensated expansion, so it stays exact as eps -> 0.
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    lam, eps, beta = ctx.lambda_j, ctx.eps, p.beta
    a2, b2 = p.a2, p.b2
    gap = _positive_gap(phi, psi, beta)
    dh = d_h_eps(phi, psi, ctx, p)
    rho1, rho2 = stable_increments(phi, psi, eps, beta)
    h1 = phi / gap + eps * rho1
    g1 = (p.a1 - 2.0 * p.b1 * h1) / p.d1
    f1_phi, f1_psi = g1 * dh[0, 0], g1 * dh[0, 1]

    S = _root_S(gap, eps, beta, phi)
    P = gap + eps + S
    Q = _root_Q(gap, eps, psi, S)
    D_d = (-beta, 1.0)
    S_d = (beta * (eps - gap) / S, (gap + eps) / S)
    h10 = phi / gap
    h10_d = (psi / gap**2, -phi / gap**2)
    h20_d = (-beta, 1.0)
    X_d = (-a2 * beta - b2, a2)
    kappa = lam / (a2 * (a2 - eps * lam))
    out = []
    for k in range(2):
        P_k = D_d[k] + S_d[k]
        rho1_k = (-4.0 * (psi if k == 0 else phi) / (gap * P * Q)
                  - rho1 * (D_d[k] / gap + P_k / P + P_k / Q))
        rho2_k = ((2.0 * beta if k == 0 else 0.0) - rho2 * P_k) / P
        Y_k = (rho2_k * (a2 - b2 * h10) - rho2 * b2 * h10_d[k]
               - b2 * (h20_d[k] * rho1 + gap * rho1_k))
        Z_k = rho1_k * rho2 + rho1 * rho2_k
        out.append(kappa * (lam * X_d[k] + a2 * Y_k - eps * a2 * b2 * Z_k))
    f2_phi, f2_psi = np.broadcast_arrays(out[0], phi)[0], np.broadcast_arrays(out[1], phi)[0]
    return np.array([[f1_phi, f1_psi], [f2_phi, f2_psi]])


def d_perturbation_terms(phi, psi, ctx: EpsilonContext, p: Params):
    """Jacobian ``R'`` of ``(r1, r2)``, same layout as :func:`d_h_eps`."""
    if ctx.eps <= 0:
        raise EpsilonZero("the competition remainder r2 is undefined at eps = 0")
    u, wt = h_eps(phi, psi, ctx, p)
    dh = d_h_eps(phi, psi, ctx, p)
    lam, eps = ctx.lambda_j, ctx.eps
    r1_d = p.c1 * (dh[0] * wt + u * dh[1]) / p.d1
    r2_d = 2.0 * p.c2 * lam * wt * dh[1] / (eps * (p.a2 - eps * lam))
    return np.array([r1_d, r2_d])


def limiting_f2(phi, psi, lambda_j, p: Params):
    """Three-term closed form of ``f2`` at ``eps = 0``."""
    gap = _positive_gap(np.asarray(phi, float), np.asarray(psi, float), p.beta)
    lam = lambda_j
    return lam**2 / p.a2 * gap - lam**2 * p.b2 / p.a2**2 * phi + p.kernel_slope * lam * phi / gap

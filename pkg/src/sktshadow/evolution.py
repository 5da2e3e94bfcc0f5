"""Time integration of the shadow system and of the rescaled SKT system

    u_t = d1 lap[(1 + w) u] + u (a1 - b1 u) - eta c1 u w,
    w_t = d2 lap[(1 + beta u) w] + w (a2 - b2 u) - eta c2 w^2,

with homogeneous Neumann conditions (``eta = 0`` is the shadow system,
``eta = 1/alpha`` the SKT system after ``w = alpha v``).

Two first-order schemes are provided:

``imex``
    diffusion implicit with frozen cross-coefficients, reactions explicit.
``rosenbrock``
    linearly implicit Euler ``(I - dt J) dy = dt N(y)`` with a Jacobian
    ``J`` frozen at a reference state.  Its amplification factor for a mode
    with rate ``sigma`` is ``1/(1 - dt sigma)``, so slowly growing modes are
    resolved with large steps; this is what the growth-rate measurement uses.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .basis import Domain1D, FieldPair
from .errors import NoGrowth, PositivityLoss, StepRejected
from .model import Params, d_h_eps
from .solver import BranchPoint, fmt

TIMESERIES_HEADER = ["t", "pert_norm", "u_min", "u_max", "w_max"]


@dataclass
class EvolutionState:
    u: np.ndarray
    w: np.ndarray
    t: float = 0.0
    dt: float = 0.0
    scheme: str = "imex"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        _check_positive(self.u, self.w)

    def stacked(self):
        return np.concatenate([self.u, self.w])


def _check_positive(u, w):
    for arr in (u, w):
        bad = np.flatnonzero(~(arr >= 0))
        if bad.size:
            raise PositivityLoss("negative or non-finite density", node=int(bad[0]))


def _domain_for(n, length):
    return Domain1D(length, n)


def rhs(u, w, p: Params, d2: float, eta: float, dom: Domain1D):
    """Right-hand side ``(N_u, N_w)`` at nodal values."""
    Nu = p.d1 * dom.laplacian((1.0 + w) * u) + u * (p.a1 - p.b1 * u) - eta * p.c1 * u * w
    Nw = d2 * dom.laplacian((1.0 + p.beta * u) * w) + w * (p.a2 - p.b2 * u) - eta * p.c2 * w * w
    return Nu, Nw


def rhs_jacobian(u, w, p: Params, d2: float, eta: float, dom: Domain1D):
    """Dense nodal Jacobian of :func:`rhs`, shape (2n, 2n)."""
    D = dom.laplacian_nodal
    n = dom.n
    J = np.empty((2 * n, 2 * n))
    J[:n, :n] = p.d1 * D * (1.0 + w) + np.diag(p.a1 - 2 * p.b1 * u - eta * p.c1 * w)
    J[:n, n:] = p.d1 * D * u - np.diag(eta * p.c1 * u)
    J[n:, :n] = d2 * p.beta * D * w - np.diag(p.b2 * w)
    J[n:, n:] = d2 * D * (1.0 + p.beta * u) + np.diag(p.a2 - p.b2 * u - 2 * eta * p.c2 * w)
    return J


def _implicit_solve(M, b):
    x = sla.solve(M, b, check_finite=False)
    res = np.max(np.abs(M @ x - b)) / max(1.0, np.max(np.abs(b)))
    if res > 1e-10:
        raise StepRejected(f"implicit solve residual {res:.2e}")
    return x


def _imex_step(state, p, d2, eta, dt, dom):
    u, w = state.u, state.w
    D = dom.laplacian_nodal
    I = np.eye(dom.n)
    ru = u + dt * (u * (p.a1 - p.b1 * u) - eta * p.c1 * u * w)
    rw = w + dt * (w * (p.a2 - p.b2 * u) - eta * p.c2 * w * w)
    un = _implicit_solve(I - dt * p.d1 * D * (1.0 + w), ru)
    wn = _implicit_solve(I - dt * d2 * D * (1.0 + p.beta * u), rw)
    return un, wn


class LinearlyImplicitStepper:
    """Linearly implicit Euler with the Jacobian frozen at ``ref`` and factored once."""

    def __init__(self, p: Params, d2: float, eta: float, dt: float, dom: Domain1D, ref_u, ref_w):
        self.p, self.d2, self.eta, self.dt, self.dom = p, d2, eta, dt, dom
        J = rhs_jacobian(ref_u, ref_w, p, d2, eta, dom)
        self.lu = sla.lu_factor(np.eye(2 * dom.n) - dt * J, check_finite=False)

    def increment(self, u, w):
        Nu, Nw = rhs(u, w, self.p, self.d2, self.eta, self.dom)
        dy = sla.lu_solve(self.lu, self.dt * np.concatenate([Nu, Nw]), check_finite=False)
        n = self.dom.n
        return dy[:n], dy[n:]

    def step(self, state: EvolutionState) -> EvolutionState:
        du, dw = self.increment(state.u, state.w)
        return EvolutionState(state.u + du, state.w + dw, state.t + self.dt, self.dt, "rosenbrock")


def _step(state, p, d2, eta, dt, length, scheme):
    if not dt > 0:
        raise ValueError("dt must be positive")
    dom = _domain_for(state.u.size, length)
    if scheme == "imex":
        un, wn = _imex_step(state, p, d2, eta, dt, dom)
        return EvolutionState(un, wn, state.t + dt, dt, "imex")
    if scheme == "rosenbrock":
        return LinearlyImplicitStepper(p, d2, eta, dt, dom, state.u, state.w).step(state)
    raise ValueError(f"unknown scheme {scheme!r}")


def step_shadow(state: EvolutionState, p: Params, d2: float, dt: float, length: float = 1.0,
                scheme: str = "imex") -> EvolutionState:
    """One step of the shadow evolution system."""
    return _step(state, p, d2, 0.0, dt, length, scheme)


def step_skt(state: EvolutionState, p: Params, d2: float, alpha: float, dt: float,
             length: float = 1.0, scheme: str = "imex") -> EvolutionState:
    """One step of the SKT system in the variables ``(u, w = alpha v)``."""
    eta = 0.0 if np.isinf(alpha) else 1.0 / alpha
    return _step(state, p, d2, eta, dt, length, scheme)


def state_from_point(pt: BranchPoint) -> EvolutionState:
    return EvolutionState(pt.u.copy(), pt.w.copy())


def perturbation_to_uw(pt: BranchPoint, direction: FieldPair):
    """Map a (phi, psi) perturbation to (u, w) through the linearized inverse change of variables."""
    prob = pt.prob
    phi, psi = pt.Phi.nodal
    dh = d_h_eps(phi, psi, prob.ctx, prob.p)
    dphi, dpsi = direction.nodal
    du = dh[0, 0] * dphi + dh[0, 1] * dpsi
    dwt = dh[1, 0] * dphi + dh[1, 1] * dpsi
    return du, dwt / prob.eps


@dataclass
class GrowthResult:
    sigma_measured: float
    sigma_reference: float
    r_squared: float
    dt: float
    steps: int
    exit_reason: str
    times: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    u_min: np.ndarray = field(repr=False)
    u_max: np.ndarray = field(repr=False)
    w_max: np.ndarray = field(repr=False)

    @property
    def relative_error(self):
        return abs(self.sigma_measured - self.sigma_reference) / abs(self.sigma_reference)


def growth_rate(steady: BranchPoint, eig, delta0: float, p: Optional[Params] = None, prob=None,
                dt: Optional[float] = None, sign: float = 1.0, growth: float = 1e3,
                rate_hint: Optional[float] = None, steps_per_efold: float = 100.0) -> GrowthResult:
    """Measure the exponential growth rate of a perturbation of a steady state.

    ``eig`` is an EigenResult (its eigenfunction is used) or a FieldPair
    direction in (phi, psi) variables together with ``rate_hint``.  The
    perturbation norm is the sup-norm of ``(delta u, eps delta w)``, measured
    against an unperturbed trajectory integrated alongside so that the
    O(round-off) drift of the steady state cancels.
    """
    prob = steady.prob if prob is None else prob
    p = prob.p if p is None else p
    direction = getattr(eig, "eigfield", eig)
    sigma_ref = float(getattr(eig, "sigma", rate_hint if rate_hint is not None else np.nan))
    if not sigma_ref > 0:
        raise ValueError("a positive reference rate is needed to size the time step")
    eps, eta, d2 = prob.eps, prob.eta, prob.ctx.d2
    dom = prob.dom
    du, dw = perturbation_to_uw(steady, direction)
    scale = max(np.max(np.abs(du)), np.max(np.abs(eps * dw)))
    steady_norm = max(np.max(np.abs(steady.u)), np.max(np.abs(steady.w_scaled)))
    amp = sign * delta0 * steady_norm / scale
    dt = 1.0 / (steps_per_efold * sigma_ref) if dt is None else dt

    stepper = LinearlyImplicitStepper(p, d2, eta, dt, dom, steady.u, steady.w)
    base = EvolutionState(steady.u.copy(), steady.w.copy(), 0.0, dt, "rosenbrock")
    cur = EvolutionState(steady.u + amp * du, steady.w + amp * dw, 0.0, dt, "rosenbrock")

    def norm(a, b):
        return max(np.max(np.abs(a.u - b.u)), eps * np.max(np.abs(a.w - b.w)))

    times, norms, umin, umax, wmax = [0.0], [norm(cur, base)], [cur.u.min()], [cur.u.max()], [cur.w.max()]
    n0 = norms[0]
    t_limit = 10.0 / sigma_ref
    stop_amp = 1e-2 * steady_norm
    reason = "grew"
    steps = 0
    while norms[-1] < growth * n0:
        if norms[-1] >= stop_amp:
            reason = "amplitude cap"
            break
        if cur.t >= t_limit and max(norms) < 2.0 * n0:
            raise NoGrowth(f"perturbation did not double within {t_limit:.3g} time units")
        if cur.t >= 10.0 * t_limit:
            reason = "time limit"
            break
        base = stepper.step(base)
        cur = stepper.step(cur)
        steps += 1
        times.append(cur.t)
        norms.append(norm(cur, base))
        umin.append(cur.u.min())
        umax.append(cur.u.max())
        wmax.append(cur.w.max())
    times, norms = np.array(times), np.array(norms)
    if reason != "grew" and max(norms) < 2.0 * n0:
        raise NoGrowth("perturbation did not grow")
    slope, intercept = np.polyfit(times, np.log(norms), 1)
    fit = slope * times + intercept
    ss_res = np.sum((np.log(norms) - fit) ** 2)
    ss_tot = np.sum((np.log(norms) - np.log(norms).mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return GrowthResult(sigma_measured=float(slope), sigma_reference=sigma_ref, r_squared=float(r2),
                        dt=dt, steps=steps, exit_reason=reason, times=times, norms=norms,
                        u_min=np.array(umin), u_max=np.array(umax), w_max=np.array(wmax))


def write_timeseries_csv(res: GrowthResult, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TIMESERIES_HEADER)
        for row in zip(res.times, res.norms, res.u_min, res.u_max, res.w_max):
            wr.writerow([fmt(v) for v in row])

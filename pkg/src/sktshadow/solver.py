"""Newton solution and continuation of the rescaled stationary system

    L Phi + eps F(Phi, eps) - eta R(Phi, eps) = 0,   Phi = (phi, psi),

in cosine-coefficient space, and reconstruction of the physical fields.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import scipy.linalg as sla

from .basis import (Domain1D, EigenMode, FieldPair, L_matrix, apply_L_coeffs, kernel_coordinates,
                    to_nodal)
from .errors import (BranchBroken, EpsilonZero, NoConvergence, PositivityLoss, SKTError)
from .model import (EpsilonContext, Params, d_nonlinearity, d_perturbation_terms, h_eps,
                    nonlinearity, perturbation_terms)
from .reduction import ReducedRoot, build_ansatz, reduce

BRANCH_HEADER = ["eps", "d2", "eta", "alpha", "s", "mu", "residual", "u_min", "u_max", "w_max",
                 "eps_w_max", "sigma", "sigma_over_eps_lambda"]


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if x is None:
        return "nan"
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class StationaryProblem:
    p: Params
    mode: EigenMode
    ctx: EpsilonContext
    eta: float = 0.0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.eta > 0 and self.ctx.eps <= 0:
            raise EpsilonZero("eta > 0 requires eps > 0")

    @classmethod
    def create(cls, p: Params, mode: EigenMode, eps: float, eta: float = 0.0):
        return cls(p, mode, EpsilonContext.create(p, mode.j, mode.lambda_j, eps), eta)

    @property
    def dom(self) -> Domain1D:
        return self.mode.dom

    @property
    def eps(self) -> float:
        return self.ctx.eps

    def at(self, eps: Optional[float] = None, eta: Optional[float] = None) -> "StationaryProblem":
        eps = self.eps if eps is None else eps
        eta = self.eta if eta is None else eta
        return StationaryProblem.create(self.p, self.mode, eps, eta)


def _product_values(coeffs, prob):
    """Nodal values used for the nonlinear terms, with the cone check applied."""
    vals = prob.dom.eval_fine(coeffs)
    phi, psi = vals[0], vals[1]
    bad = np.flatnonzero(~((phi > 0) & (psi - prob.p.beta * phi > 0)))
    if bad.size:
        raise PositivityLoss("state left the positive cone", node=int(bad[0]))
    return phi, psi


def residual_coeffs(coeffs, prob: StationaryProblem):
    phi, psi = _product_values(coeffs, prob)
    out = apply_L_coeffs(coeffs, prob.mode, prob.p)
    if prob.eps > 0:
        f = np.vstack(nonlinearity(phi, psi, prob.ctx, prob.p))
        out += prob.eps * prob.dom.project_fine(f)
    if prob.eta > 0:
        r = np.vstack(perturbation_terms(phi, psi, prob.ctx, prob.p))
        out -= prob.eta * prob.dom.project_fine(r)
    return out


def residual(Phi: FieldPair, prob: StationaryProblem) -> FieldPair:
    return FieldPair(Phi.dom, residual_coeffs(Phi.coeffs, prob), "residual")


def _nodal_blocks(phi, psi, prob, fd=False):
    """``eps F' - eta R'`` at nodes, shape (2, 2, m)."""
    if fd:
        return _nodal_blocks_fd(phi, psi, prob)
    g = np.zeros((2, 2) + phi.shape)
    if prob.eps > 0:
        g += prob.eps * d_nonlinearity(phi, psi, prob.ctx, prob.p)
    if prob.eta > 0:
        g -= prob.eta * d_perturbation_terms(phi, psi, prob.ctx, prob.p)
    return g


def _pointwise_terms(phi, psi, prob):
    out = prob.eps * np.array(nonlinearity(phi, psi, prob.ctx, prob.p))
    if prob.eta > 0:
        out -= prob.eta * np.array(perturbation_terms(phi, psi, prob.ctx, prob.p))
    return out


def _nodal_blocks_fd(phi, psi, prob):
    g = np.zeros((2, 2) + phi.shape)
    for k, base in enumerate((phi, psi)):
        h = 1e-6 * np.maximum(1.0, np.abs(base))
        plus = [phi, psi]
        minus = [phi, psi]
        plus[k] = base + h
        minus[k] = base - h
        g[:, k] = (_pointwise_terms(*plus, prob) - _pointwise_terms(*minus, prob)) / (2 * h)
    return g


def jacobian_coeffs(coeffs, prob: StationaryProblem, fd: bool = False):
    """Dense (2n, 2n) Jacobian of :func:`residual_coeffs`."""
    dom = prob.dom
    n = dom.n
    J = L_matrix(prob.mode, prob.p)
    if prob.eps == 0 and prob.eta == 0:
        return J
    phi, psi = _product_values(coeffs, prob)
    g = _nodal_blocks(phi, psi, prob, fd)
    E, Pr = dom.eval_matrix, dom.project_matrix
    for i in range(2):
        for k in range(2):
            J[i * n:(i + 1) * n, k * n:(k + 1) * n] += Pr @ (g[i, k][:, None] * E)
    return J


def jacobian(Phi: FieldPair, prob: StationaryProblem, fd: bool = False):
    return jacobian_coeffs(Phi.coeffs, prob, fd)


@dataclass
class NewtonOptions:
    tol: float = 1e-11
    max_iter: int = 30
    min_step: float = 1e-12
    armijo: float = 1e-4


@dataclass
class BranchPoint:
    eps: float
    eta: float
    Phi: FieldPair
    s: float
    mu: float
    residual_norm: float
    iterations: int
    u: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    prob: StationaryProblem = field(repr=False)
    sigma: Optional[float] = None

    @property
    def d2(self) -> float:
        return self.prob.ctx.d2

    @property
    def alpha(self) -> float:
        return np.inf if self.eta == 0 else 1.0 / self.eta

    @property
    def v(self) -> np.ndarray:
        """Physical v = w / alpha of the SKT system (zero for the shadow system)."""
        return self.w * self.eta

    @property
    def w_scaled(self) -> np.ndarray:
        return self.eps * self.w


def _sup(coeffs):
    return float(np.max(np.abs(to_nodal(coeffs))))


def make_point(coeffs, prob: StationaryProblem, res_norm: float, iterations: int) -> BranchPoint:
    Phi = FieldPair(prob.dom, coeffs)
    s, t = kernel_coordinates(coeffs, prob.mode, prob.p)
    mu = t * prob.p.a2 / (prob.p.b2 * s)
    phi, psi = Phi.nodal
    u, wt = h_eps(phi, psi, prob.ctx, prob.p)
    return BranchPoint(eps=prob.eps, eta=prob.eta, Phi=Phi, s=s, mu=mu, residual_norm=res_norm,
                       iterations=iterations, u=u, w=wt / prob.eps, prob=prob)


def newton(initial: FieldPair, prob: StationaryProblem, opts: Optional[NewtonOptions] = None) -> BranchPoint:
    """Damped Newton iteration on the coefficient vector.

    Steps are halved while the trial state leaves the positive cone or fails
    the Armijo test on the nodal sup-norm of the residual.
    """
    opts = opts or NewtonOptions()
    if prob.eps <= 0:
        raise EpsilonZero("the eps = 0 system is degenerate; use the reduction module")
    n = prob.dom.n
    x = initial.coeffs.copy()
    r = residual_coeffs(x, prob)
    rn = _sup(r)
    tol = opts.tol * max(1.0, _sup(x))
    it = 0
    while rn > tol:
        if it >= opts.max_iter:
            raise NoConvergence(it, rn)
        J = jacobian_coeffs(x, prob)
        dx = sla.solve(J, -r.reshape(-1), check_finite=False).reshape(2, n)
        lam = 1.0
        while True:
            trial = x + lam * dx
            try:
                rt = residual_coeffs(trial, prob)
                rtn = _sup(rt)
                if rtn <= (1.0 - opts.armijo * lam) * rn or rtn <= tol:
                    break
            except PositivityLoss:
                pass
            lam *= 0.5
            if lam < opts.min_step:
                # a stalled line search at round-off level is convergence, not failure
                if rn <= 100 * tol:
                    return make_point(x, prob, rn, it)
                raise PositivityLoss("line search step fell below the minimum")
        x, r, rn = trial, rt, rtn
        tol = opts.tol * max(1.0, _sup(x))
        it += 1
    return make_point(x, prob, rn, it)


@dataclass
class Branch:
    points: List[BranchPoint]
    sign: int
    j: int
    eta: float = 0.0
    seeded_from: str = "largest"
    u_deviation: Optional[List[float]] = None

    def __len__(self):
        return len(self.points)

    @property
    def eps(self):
        return np.array([pt.eps for pt in self.points])


def ansatz_guess(root: ReducedRoot, prob: StationaryProblem) -> FieldPair:
    Phi0, PhiStar0, _, _ = build_ansatz(root, prob.p, prob.mode)
    return Phi0 + prob.eps * PhiStar0


def _solve_with_refinement(prev: BranchPoint, target_eps: float, prob_template, opts, predictor=None,
                           max_bisect: int = 5):
    """Step from ``prev`` to ``target_eps``, bisecting the eps step on failure."""
    guess = predictor if predictor is not None else prev.Phi
    try:
        return newton(guess, prob_template.at(eps=target_eps), opts)
    except SKTError:
        pass
    if max_bisect == 0:
        raise BranchBroken(target_eps, "newton failed after step refinement")
    mid = np.sqrt(prev.eps * target_eps)
    half = _solve_with_refinement(prev, mid, prob_template, opts, None, max_bisect - 1)
    return _solve_with_refinement(half, target_eps, prob_template, opts, None, max_bisect - 1)


def _secant(pts, eps):
    if len(pts) < 2:
        return None
    a, b = pts[-2], pts[-1]
    return b.Phi + (eps - b.eps) / (b.eps - a.eps) * (b.Phi - a.Phi)


def _march(start: BranchPoint, grid, prob_template, opts):
    pts = [start]
    for eps in grid:
        pred = _secant(pts, eps)
        pts.append(_solve_with_refinement(pts[-1], eps, prob_template, opts, pred))
    return pts


def continue_branch(prob_template: StationaryProblem, eps_grid, sign: int,
                    root: Optional[ReducedRoot] = None, opts: Optional[NewtonOptions] = None,
                    arclength: bool = False) -> Branch:
    """Natural continuation in eps over a descending grid.

    Seeds at the largest eps with the two-term ansatz; if that Newton solve
    fails it seeds at the smallest eps instead and marches upward.
    With ``arclength`` the points between the grid ends are produced by
    pseudo-arclength steps instead (they need not lie on the grid).
    """
    grid = sorted((float(e) for e in eps_grid), reverse=True)
    if not grid:
        raise ValueError("empty eps grid")
    p, mode = prob_template.p, prob_template.mode
    limit = p.a2 / mode.lambda_j
    if grid[0] >= limit or grid[-1] <= 0:
        raise ValueError(f"eps grid must lie in (0, {limit})")
    if root is None:
        root = reduce(p, mode, sign)
    opts = opts or NewtonOptions()
    shadow = prob_template.at(eta=0.0)
    try:
        first = newton(ansatz_guess(root, shadow.at(eps=grid[0])), shadow.at(eps=grid[0]), opts)
        seeded = "largest"
        if arclength:
            pts = arclength_march(first, grid[-1], shadow, opts, ds_factor=_log_ratio(grid))
        else:
            pts = _march(first, grid[1:], shadow, opts)
    except SKTError as exc:
        last = grid[-1]
        try:
            first = newton(ansatz_guess(root, shadow.at(eps=last)), shadow.at(eps=last), opts)
        except SKTError:
            raise BranchBroken(grid[0], f"seeding failed at both ends ({exc})") from exc
        seeded = "smallest"
        pts = _march(first, grid[-2::-1], shadow, opts)[::-1]
    return Branch(points=pts, sign=sign, j=mode.j, eta=0.0, seeded_from=seeded)


def _log_ratio(grid):
    if len(grid) < 2:
        return 0.5
    return abs(np.log(grid[1] / grid[0]))


def eta_homotopy(shadow_point: BranchPoint, alpha_list, opts: Optional[NewtonOptions] = None) -> Branch:
    """Continue a shadow solution (eta = 0) to eta = 1/alpha for each alpha.

    Points are solved from the largest alpha (closest to the shadow limit)
    downward, each seeding the next, and returned in the order of
    ``alpha_list``.  ``u_deviation`` holds ``max|u_alpha - u_shadow|``.
    """
    if shadow_point.eta != 0:
        raise ValueError("homotopy must start from a shadow solution")
    opts = opts or NewtonOptions()
    alphas = [float(a) for a in alpha_list]
    order = sorted(range(len(alphas)), key=lambda i: -alphas[i])
    base = shadow_point.prob
    solved = {}
    prev = shadow_point
    for i in order:
        eta = 0.0 if np.isinf(alphas[i]) else 1.0 / alphas[i]
        pt = _eta_step(prev, eta, base, opts)
        solved[i] = pt
        prev = pt
    pts = [solved[i] for i in range(len(alphas))]
    dev = [float(np.max(np.abs(pt.u - shadow_point.u))) for pt in pts]
    return Branch(points=pts, sign=int(np.sign(shadow_point.mu)) or 1, j=base.mode.j,
                  eta=pts[-1].eta if pts else 0.0, u_deviation=dev)


def _eta_step(prev, eta, base, opts, depth=5):
    try:
        return newton(prev.Phi, base.at(eta=eta), opts)
    except SKTError:
        if depth == 0:
            raise BranchBroken(base.eps, f"eta continuation failed at eta={eta}")
    mid = 0.5 * (prev.eta + eta)
    half = _eta_step(prev, mid, base, opts, depth - 1)
    return _eta_step(half, eta, base, opts, depth - 1)


def _d_residual_d_eps(coeffs, prob, h_rel=1e-6):
    h = h_rel * prob.eps
    return (residual_coeffs(coeffs, prob.at(eps=prob.eps + h))
            - residual_coeffs(coeffs, prob.at(eps=prob.eps - h))).reshape(-1) / (2 * h)


def arclength_march(start: BranchPoint, eps_end: float, prob_template, opts, ds_factor=0.5,
                    max_steps: int = 200) -> List[BranchPoint]:
    """Pseudo-arclength continuation in (coeffs, log eps) until eps passes ``eps_end``.

    The parameter is ``tau = log eps`` so that steps are uniform on a log grid.
    A fold in eps would be followed; none occurs on the branches studied here.
    """
    n = start.prob.dom.n
    pts = [start]
    x = np.concatenate([start.Phi.coeffs.reshape(-1), [np.log(start.eps)]])
    direction = np.zeros_like(x)
    direction[-1] = -1.0 if eps_end < start.eps else 1.0
    ds = ds_factor
    for _ in range(max_steps):
        # tangent from the bordered system
        prob = prob_template.at(eps=np.exp(x[-1]))
        J = jacobian_coeffs(x[:-1].reshape(2, n), prob)
        Je = _d_residual_d_eps(x[:-1].reshape(2, n), prob) * prob.eps
        bord = np.zeros((2 * n + 1, 2 * n + 1))
        bord[:-1, :-1], bord[:-1, -1], bord[-1] = J, Je, direction
        rhs = np.zeros(2 * n + 1)
        rhs[-1] = 1.0
        tangent = sla.solve(bord, rhs)
        tangent /= np.linalg.norm(tangent)
        pred = x + ds * tangent
        if (np.exp(pred[-1]) - eps_end) * (start.eps - eps_end) < 0:
            ds = abs((np.log(eps_end) - x[-1]) / tangent[-1])
            pred = x + ds * tangent
        y = pred.copy()
        for _it in range(opts.max_iter):
            prob = prob_template.at(eps=np.exp(y[-1]))
            c = y[:-1].reshape(2, n)
            r = residual_coeffs(c, prob).reshape(-1)
            arc = tangent @ (y - x) - ds
            if _sup(r.reshape(2, n)) <= opts.tol * max(1.0, _sup(c)) and abs(arc) < 1e-12:
                break
            J = jacobian_coeffs(c, prob)
            bord[:-1, :-1], bord[:-1, -1], bord[-1] = J, _d_residual_d_eps(c, prob) * prob.eps, tangent
            y = y + sla.solve(bord, -np.concatenate([r, [arc]]))
        else:
            raise BranchBroken(float(np.exp(y[-1])), "arclength corrector did not converge")
        direction = tangent
        x = y
        prob = prob_template.at(eps=float(np.exp(x[-1])))
        pt = newton(FieldPair(prob.dom, x[:-1].reshape(2, n)), prob, opts)
        pts.append(pt)
        if abs(np.log(pt.eps / eps_end)) < 1e-12 or (pt.eps - eps_end) * (start.eps - eps_end) <= 0:
            break
    return pts


def branch_rows(branch: Branch):
    rows = []
    for pt in branch.points:
        lam = pt.prob.mode.lambda_j
        ratio = None if pt.sigma is None else pt.sigma / (pt.eps * lam)
        alpha = pt.alpha
        rows.append([pt.eps, pt.d2, pt.eta, alpha, pt.s, pt.mu, pt.residual_norm,
                     np.min(pt.u), np.max(pt.u), np.max(pt.w), np.max(pt.w_scaled), pt.sigma, ratio])
    return rows


def write_branch_csv(branch: Branch, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(BRANCH_HEADER)
        for row in branch_rows(branch):
            wr.writerow([fmt(v) for v in row])


def write_profiles(pt: BranchPoint, directory, tag: str):
    """Two-column ``x,value`` dumps of u, w, phi and psi for one branch point."""
    os.makedirs(directory, exist_ok=True)
    x = pt.prob.dom.x
    fields = {"u": pt.u, "w": pt.w, "phi": pt.Phi.first, "psi": pt.Phi.second}
    paths = []
    for name, vals in fields.items():
        path = os.path.join(directory, f"{tag}_{name}.csv")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x", "value"])
            for xi, vi in zip(x, vals):
                wr.writerow([fmt(xi), fmt(vi)])
        paths.append(path)
    return paths

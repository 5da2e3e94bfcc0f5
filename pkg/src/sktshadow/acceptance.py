"""Self-contained acceptance suite on the worked parameter set.

Each criterion returns a :class:`CriterionResult` holding one row per
measured quantity (measured value, expected value, tolerance, verdict).
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List

import numpy as np

from . import evolution, reduction, solver, spectra
from .basis import (Domain1D, FieldPair, adjoint_kernel_vectors, apply_L, kernel_vectors,
                    neumann_eigenpair, project_P, solve_L_X0)
from .errors import SKTError
from .model import EpsilonContext, Params, h_eps, stable_increments

WORKED = Params(a1=4.0, a2=2.0, b1=1.0, b2=1.0, c1=1.0, c2=1.0, d1=1.0, beta=0.0)
S0_ANCHOR = 0.863979


@dataclass
class Check:
    label: str
    measured: float
    expected: str
    tol: str
    passed: bool


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: List[Check] = field(default_factory=list)
    error: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.error and all(c.passed for c in self.checks)

    def add(self, label, measured, expected, tol, passed):
        self.checks.append(Check(label, float(measured), str(expected), str(tol), bool(passed)))

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        failed = [c.label for c in self.checks if not c.passed]
        extra = f" (failed: {', '.join(failed)})" if failed else ""
        if self.error:
            extra += f" (error: {self.error})"
        return f"criterion {self.number} [{verdict}] {self.title}{extra}"


@lru_cache(maxsize=None)
def worked_setup(n: int = 256):
    dom = Domain1D(1.0, n)
    mode = neumann_eigenpair(dom, 1)
    root = reduction.reduce(WORKED, mode, 1)
    return dom, mode, root


@lru_cache(maxsize=None)
def worked_branch(n: int = 256):
    dom, mode, root = worked_setup(n)
    prob = solver.StationaryProblem.create(WORKED, mode, 1e-1)
    return solver.continue_branch(prob, np.logspace(-1, -4, 16), 1, root)


def _point_at(branch, eps):
    return min(branch.points, key=lambda pt: abs(math.log(pt.eps / eps)))


def _run(number, title, body: Callable[[CriterionResult], None]) -> CriterionResult:
    res = CriterionResult(number, title)
    t0 = time.perf_counter()
    try:
        body(res)
    except SKTError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    res.seconds = time.perf_counter() - t0
    return res


def criterion_1(n: int = 256) -> CriterionResult:
    def body(res):
        dom = Domain1D(1.0, n)
        worst = 0.0
        for j in (1, 2, 3):
            for mu in (0.25, -0.25, 0.5, -0.5, 0.65, -0.65):
                a = math.sqrt(2.0) * mu
                exact = (1 / math.sqrt(1 - a * a), (1 - a * a) ** -1.5,
                         (1 + a * a / 2) * (1 - a * a) ** -2.5)
                ell = 1.0 + a * np.cos(j * np.pi * dom.x)
                for k in (1, 2, 3):
                    worst = max(worst, abs(dom.integrate(ell ** -k) / exact[k - 1] - 1))
        res.add("max relative error", worst, "closed forms", "1e-10", worst <= 1e-10)
    return _run(1, "closed-form integral suite", body)


def criterion_2(n: int = 256) -> CriterionResult:
    def body(res):
        _, mode, _ = worked_setup(n)
        mu_m, mu_p = reduction.solve_mu(WORKED, mode)
        res.add("mu+", mu_p, 0.5, "1e-10", abs(mu_p - 0.5) <= 1e-10)
        res.add("mu-", mu_m, -0.5, "1e-10", abs(mu_m + 0.5) <= 1e-10)
        for sign in (1, -1):
            root = reduction.reduce(WORKED, mode, sign)
            tag = "+" if sign > 0 else "-"
            res.add(f"s0{tag}", root.s0, S0_ANCHOR, "1e-5", abs(root.s0 - S0_ANCHOR) <= 1e-5)
            br = reduction.c0_bracket(mode, WORKED, root.mu0)
            res.add(f"C0 bracket{tag}", br, -2 * math.sqrt(2), "1e-8", abs(br + 2 * math.sqrt(2)) <= 1e-8)
            for name, margin in zip(("i", "ii", "iii"), root.margins):
                res.add(f"inequality ({name}) margin{tag}", margin, "> 0", "-", margin > 0)
            bound = 2 * math.pi**4 * 0.5 * 2 * math.sqrt(2)
            res.add(f"lower bound{tag}", root.lower_bound, f"{bound:.6g}", "1e-10 rel",
                    abs(root.lower_bound / bound - 1) <= 1e-10)
            res.add(f"det slack{tag}", root.det_value - root.lower_bound, "> 0", "-",
                    root.det_value - root.lower_bound > 0)
    return _run(2, "reduction anchors", body)


def criterion_3(n: int = 256) -> CriterionResult:
    def body(res):
        t0 = time.perf_counter()
        _, mode, root = worked_setup(n)
        norms = []
        for eps in (1e-2, 5e-3, 2.5e-3):
            prob = solver.StationaryProblem.create(WORKED, mode, eps)
            guess = solver.ansatz_guess(root, prob)
            norms.append(solver.residual(guess, prob).sup_norm())
        orders = [math.log2(norms[i] / norms[i + 1]) for i in range(2)]
        for i, o in enumerate(orders):
            res.add(f"order {i + 1}", o, ">= 1.8", "-", o >= 1.8)
        dt = time.perf_counter() - t0
        res.add("runtime [s]", dt, "< 5", "-", dt < 5)
    return _run(3, "ansatz residual order", body)


def criterion_4(n: int = 256) -> CriterionResult:
    def body(res):
        _, mode, root = worked_setup(n)
        branch = worked_branch(n)
        last = branch.points[-1]
        ew = WORKED.b2 / WORKED.a2 * root.s0 * (1 + abs(root.mu0) * math.sqrt(2))
        u_limit = float(np.max(WORKED.a2 / (WORKED.b2 * mode.ell(root.mu0))))
        got_w = float(np.max(last.w_scaled))
        got_u = float(np.max(last.u))
        res.add("eps*max w / limit", got_w / ew, 1.0, "0.02", abs(got_w / ew - 1) <= 0.02)
        res.add("max u / limit", got_u / u_limit, 1.0, "0.02", abs(got_u / u_limit - 1) <= 0.02)
        for name, vals, lim in (("s", [pt.s for pt in branch.points], root.s0),
                                ("mu", [pt.mu for pt in branch.points], root.mu0)):
            q = [(v - lim) / pt.eps for v, pt in zip(vals, branch.points)]
            ratios = [q[i + 1] / q[i] for i in range(len(q) - 1)]
            lo, hi = min(ratios), max(ratios)
            res.add(f"({name}-{name}0)/eps ratio min", lo, "[0.5, 2]", "-", 0.5 <= lo <= 2)
            res.add(f"({name}-{name}0)/eps ratio max", hi, "[0.5, 2]", "-", 0.5 <= hi <= 2)
    return _run(4, "branch asymptotics", body)


def _eig(pt, root):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return spectra.eigen_near_zero(spectra.assemble_pencil(pt, root=root))


def criterion_5(n: int = 256) -> CriterionResult:
    def body(res):
        _, mode, root = worked_setup(n)
        branch = worked_branch(n)
        eigs = [_eig(pt, root) for pt in branch.points]
        smin = min(e.sigma for e in eigs)
        res.add("min sigma over branch", smin, "> 0", "-", smin > 0)
        for eps, tol in ((1e-3, 0.05), (1e-4, 0.005)):
            e = eigs[branch.points.index(_point_at(branch, eps))]
            dev = abs(e.Lambda / mode.lambda_j - 1)
            res.add(f"|sigma/(eps lam) - 1| at {eps:g}", dev, "0", str(tol), dev <= tol)
        ladder = [eigs[branch.points.index(_point_at(branch, e))] for e in (1e-2, 1e-3, 1e-4)]
        kg = [abs(e.gamma) / e.eps for e in ladder]
        res.add("|gamma|/eps spread (max/min)", max(kg) / min(kg), "<= 2", "-", max(kg) / min(kg) <= 2)
        res.add("|gamma| decreasing", float(all(abs(ladder[i + 1].gamma) < abs(ladder[i].gamma)
                                               for i in range(2))), 1, "-",
                all(abs(ladder[i + 1].gamma) < abs(ladder[i].gamma) for i in range(2)))
        e3 = ladder[1]
        target = WORKED.b2 * mode.lambda_j / WORKED.a2**2
        rel = abs(e3.psi_tilde_mean / target - 1)
        res.add("mean psi~ vs pi^2/4 at 1e-3", e3.psi_tilde_mean, f"{target:.6g}", "5%", rel <= 0.05)
        res.add("sup-deviation from constancy at 1e-3", e3.tilde_dev, "0", "5%", e3.tilde_dev <= 0.05)
    return _run(5, "unstable eigenvalue", body)


def criterion_6(n: int = 256) -> CriterionResult:
    def body(res):
        t0 = time.perf_counter()
        _, mode, root = worked_setup(n)
        for eps in (1e-2, 1e-3):
            prob = solver.StationaryProblem.create(WORKED, mode, eps)
            pt = solver.newton(solver.ansatz_guess(root, prob), prob)
            eig = _eig(pt, root)
            g = evolution.growth_rate(pt, eig, 1e-8)
            res.add(f"measured/sigma at {eps:g}", g.sigma_measured / eig.sigma, 1.0, "0.1",
                    g.relative_error <= 0.1)
            res.add(f"R^2 at {eps:g}", g.r_squared, ">= 0.999", "-", g.r_squared >= 0.999)
        dt = time.perf_counter() - t0
        res.add("runtime [s]", dt, "< 60", "-", dt < 60)
    return _run(6, "nonlinear instability growth rate", body)


def criterion_7(n: int = 256, alphas=(1e3, 2e3, 4e3, 8e3)) -> CriterionResult:
    def body(res):
        _, mode, root = worked_setup(n)
        prob = solver.StationaryProblem.create(WORKED, mode, 1e-2)
        shadow = solver.newton(solver.ansatz_guess(root, prob), prob)
        sig0 = _eig(shadow, root).sigma
        # largest alpha first, so the points closest to the shadow limit are kept on failure
        solved = {}
        prev = shadow
        for a in sorted(alphas, reverse=True):
            try:
                prev = solver._eta_step(prev, 1.0 / a, prob, solver.NewtonOptions())
            except SKTError as exc:
                res.add(f"solution at alpha={a:g}", 0.0, "exists", "-", False)
                res.error = f"{type(exc).__name__}: {exc}"
                break
            solved[a] = prev
        devs = {a: float(np.max(np.abs(pt.u - shadow.u))) for a, pt in solved.items()}
        ordered = [a for a in alphas if a in devs]
        for a, b in zip(ordered, ordered[1:]):
            r = devs[b] / devs[a]
            res.add(f"deviation ratio {a:g}->{b:g}", r, 0.5, "0.15", abs(r - 0.5) <= 0.15)
        for a in ordered:
            s = _eig(solved[a], root).sigma
            res.add(f"sigma(alpha={a:g})/sigma_shadow", s / sig0, 1.0, "0.1", abs(s / sig0 - 1) <= 0.1)
    res = _run(7, "SKT perturbation", body)
    if res.error and not any(not c.passed for c in res.checks):
        res.add("homotopy", 0.0, "completes", "-", False)
    return res


def structural_checks(n: int = 256, seed: int = 0):
    """Invariant suites of the basis, model, reduction and solver layers."""
    rng = np.random.default_rng(seed)
    dom = Domain1D(1.0, n)
    mode = neumann_eigenpair(dom, 1)
    p = Params(a1=4.0, a2=2.0, b1=1.0, b2=1.0, beta=0.7)
    out = []
    e1, e2 = kernel_vectors(mode, p)
    kern = max(apply_L(e1, mode, p).sup_norm(), apply_L(e2, mode, p).sup_norm())
    out.append(("kernel annihilation", kern, 1e-12))
    e1s, e2s = adjoint_kernel_vectors(mode, p)
    orth, inv = 0.0, 0.0
    decay = 1.0 / (1.0 + np.arange(n)) ** 2
    for _ in range(100):
        Phi = FieldPair(dom, rng.standard_normal((2, n)) * decay)
        LPhi = apply_L(Phi, mode, p).nodal
        scale = np.max(np.abs(LPhi))
        orth = max(orth, abs(dom.integrate(np.sum(LPhi * e1s, axis=0))) / scale,
                   abs(dom.integrate(np.sum(LPhi * e2s, axis=0))) / scale)
        _, _, X0 = project_P(Phi, mode, p)
        back = solve_L_X0(apply_L(X0, mode, p), mode, p)
        inv = max(inv, np.max(np.abs(back.coeffs - X0.coeffs)) / np.max(np.abs(X0.coeffs)))
    out.append(("adjoint-kernel orthogonality", orth, 1e-12))
    out.append(("restricted inverse identity", inv, 1e-10))
    proj = 0.0
    for _ in range(20):
        Phi = FieldPair(dom, rng.standard_normal((2, n)) * decay)
        s, t, _ = project_P(project_P(Phi, mode, p)[2], mode, p)
        proj = max(proj, abs(s), abs(t))
    out.append(("projection of remainder", proj, 1e-12))

    phi = rng.uniform(0.01, 5.0, 2000)
    psi = p.beta * phi + rng.uniform(0.01, 5.0, 2000)
    rt = 0.0
    for eps in (0.0, 1e-12, 1e-8, 1e-4, 1e-2, 0.3, 1.0):
        ctx = EpsilonContext(1, mode.lambda_j, eps, 1.0)
        u, wt = h_eps(phi, psi, ctx, p)
        rt = max(rt, np.max(np.abs((eps + wt) * u - phi) / np.spacing(phi)),
                 np.max(np.abs((1 + p.beta * u) * wt - psi) / np.spacing(psi)))
    out.append(("round trip [ulps]", rt, 8))
    pinned = increment_exactness(1.0, 3.0, Params(a1=4.0, a2=2.0, b1=1.0, b2=1.0, beta=1.0),
                                 np.logspace(-12, 0, 121))
    out.append(("increments at (1, 3, beta=1), eps in [1e-12, 1] [ulps]", pinned, 4))

    wmode = neumann_eigenpair(Domain1D(1.0, n), 1)
    mus = np.concatenate([np.linspace(-0.69, -0.01, 25), np.linspace(0.01, 0.69, 25)])
    mono = min(mu * (reduction.hj(mu + 1e-5, wmode) - reduction.hj(mu - 1e-5, wmode)) for mu in mus)
    out.append(("h_j monotonicity (min mu*dh, negated)", -mono, 0.0))
    width = wmode.M_j - wmode.m_j
    edge = min(reduction.hj(wmode.M_j - 1e-4 * width, wmode), reduction.hj(wmode.m_j + 1e-4 * width, wmode))
    out.append(("h_j endpoint blow-up (1e3 / h)", 1e3 / edge, 1.0))
    h = 1e-5
    dh0 = abs(reduction.hj(h, wmode) - reduction.hj(-h, wmode)) / (2 * h)
    out.append(("h_j'(0)", dh0, 1e-8))

    _, _, root = worked_setup(n)
    prob = solver.StationaryProblem.create(WORKED, mode, 1e-2, eta=1e-5)
    pt = solver.newton(solver.ansatz_guess(root, prob.at(eta=0.0)), prob)
    J = solver.jacobian(pt.Phi, prob)
    worst = 0.0
    for _ in range(5):
        v = rng.standard_normal((2, n)) * decay
        hstep = 1e-6 / np.max(np.abs(v))
        fd = (solver.residual_coeffs(pt.Phi.coeffs + hstep * v, prob)
              - solver.residual_coeffs(pt.Phi.coeffs - hstep * v, prob)) / (2 * hstep)
        jv = (J @ v.reshape(-1)).reshape(2, n)
        worst = max(worst, np.linalg.norm(jv - fd) / np.linalg.norm(jv))
    out.append(("jacobian vs FD", worst, 1e-6))
    return out


def increment_exactness(phi, psi, p, eps_list):
    """Worst error of ``h0 + eps*rho - h_eps`` over both components, in ulps of ``h_eps``."""
    phi = np.atleast_1d(np.asarray(phi, float))
    psi = np.atleast_1d(np.asarray(psi, float))
    D = psi - p.beta * phi
    worst = 0.0
    for eps in eps_list:
        u, wt = h_eps(phi, psi, EpsilonContext(1, 1.0, float(eps), 1.0), p)
        r1, r2 = stable_increments(phi, psi, eps, p.beta)
        for h0, rho, h in ((phi / D, r1, u), (D, r2, wt)):
            worst = max(worst, float(np.max(np.abs(h0 + eps * rho - h) / np.spacing(h))))
    return worst


def criterion_8(n: int = 256) -> CriterionResult:
    def body(res):
        for label, measured, tol in structural_checks(n):
            ok = measured <= tol if tol > 0 else measured < 0
            res.add(label, measured, "<= tol" if tol > 0 else "< 0", f"{tol:g}", ok)
    return _run(8, "structural suites", body)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8]


def run_all(n: int = 256) -> List[CriterionResult]:
    return [c(n) for c in CRITERIA]


def format_table(results: List[CriterionResult]) -> str:
    lines = []
    for r in results:
        lines.append(r.line())
        for c in r.checks:
            mark = "ok " if c.passed else "BAD"
            lines.append(f"    {mark} {c.label:45s} measured={c.measured:<24.12g} "
                         f"expected={c.expected:<12s} tol={c.tol}")
    return "\n".join(lines)

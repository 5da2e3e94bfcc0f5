"""Linear stability of branch points: the pencil ``sigma T Phi = A Phi``.

``A`` is the stationary Jacobian and ``T`` comes from rewriting the time
derivatives of ``(u, w~)`` in terms of ``(phi, psi)``:

    T(x) = [[(eps/d1) du/dphi, (eps/d1) du/dpsi],
            [(1/d2) dw~/dphi,  (1/d2) dw~/dpsi ]].

The unstable eigenvalue sits near ``eps * lambda_j``; it is located by a
shift-invert eigensolve about that target and refined by inverse iteration.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .basis import FieldPair, L_matrix, project_P
from .errors import ComplexPairWarning, NoRealEigenvalueNearTarget, SignViolation
from .model import d_h_eps
from .reduction import ReducedRoot, c0_bracket, c0_constant
from .solver import BranchPoint, fmt, jacobian_coeffs

SPECTRUM_HEADER = ["eps", "sigma", "lambda_ratio", "gamma", "tilde_dev", "resid"]


def mass_nodal(phi, psi, ctx, p):
    """Nodal entries of ``T``, shape (2, 2, m)."""
    dh = d_h_eps(phi, psi, ctx, p)
    T = np.empty_like(dh)
    T[0] = ctx.eps / p.d1 * dh[0]
    T[1] = dh[1] / ctx.d2
    return T


def nodal_to_operator(blocks, dom):
    """Dense coefficient-space matrix of pointwise multiplication by a 2x2 block field."""
    n = dom.n
    E, Pr = dom.eval_matrix, dom.project_matrix
    M = np.zeros((2 * n, 2 * n))
    for i in range(2):
        for k in range(2):
            M[i * n:(i + 1) * n, k * n:(k + 1) * n] = Pr @ (blocks[i, k][:, None] * E)
    return M


@dataclass(eq=False)
class SpectralPencil:
    A: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    T_nodal: np.ndarray = field(repr=False)
    eps: float
    eta: float
    point: BranchPoint = field(repr=False)
    mu0: float

    @property
    def target(self):
        return self.eps * self.point.prob.mode.lambda_j


@dataclass
class EigenResult:
    sigma: float
    Lambda: float
    eigfield: FieldPair = field(repr=False)
    gamma: float
    tilde: FieldPair = field(repr=False)
    residual: float
    psi_tilde_mean: float
    tilde_dev: float
    eps: float

    @property
    def lambda_ratio(self):
        return self.Lambda / self.eigfield_lambda_j

    eigfield_lambda_j: float = np.nan


def assemble_pencil(point: BranchPoint, prob=None, root: Optional[ReducedRoot] = None) -> SpectralPencil:
    prob = point.prob if prob is None else prob
    vals = prob.dom.eval_fine(point.Phi.coeffs)
    Tn = mass_nodal(vals[0], vals[1], prob.ctx, prob.p)
    if not np.all(np.isfinite(Tn)):
        raise ValueError("non-finite mass matrix entries")
    A = jacobian_coeffs(point.Phi.coeffs, prob)
    T = nodal_to_operator(Tn, prob.dom)
    mu0 = root.mu0 if root is not None else point.mu
    return SpectralPencil(A=A, T=T, T_nodal=Tn, eps=prob.eps, eta=prob.eta, point=point, mu0=mu0)


def _refine(A, T, sigma, x, steps=3):
    for _ in range(steps):
        lu = sla.lu_factor(A - sigma * T)
        y = sla.lu_solve(lu, T @ x)
        # (A - sigma T) y = T x  =>  eigenvalue estimate sigma + <x, x>/<x, y> for the dominant mode
        sigma = sigma + (x @ x) / (x @ y)
        x = y / np.linalg.norm(y)
    return sigma, x


def eigen_near_zero(pencil: SpectralPencil, window=(0.2, 5.0)) -> EigenResult:
    """Real eigenvalue of the pencil nearest ``eps * lambda_j`` inside the window."""
    A, T = pencil.A, pencil.T
    tau = pencil.target
    lo, hi = window[0] * tau, window[1] * tau
    # shift-invert about the target: nu = 1 / (sigma - tau)
    lu = sla.lu_factor(A - tau * T)
    Minv = sla.lu_solve(lu, T)
    nu, vecs = sla.eig(Minv)
    with np.errstate(divide="ignore", invalid="ignore"):
        sig = tau + 1.0 / nu
    finite = np.isfinite(sig)
    real = finite & (np.abs(sig.imag) <= 1e-8 * np.abs(sig))
    cand = np.flatnonzero(real & (sig.real >= lo) & (sig.real <= hi))
    near = np.flatnonzero(finite)
    if near.size:
        closest = near[np.argmin(np.abs(sig[near] - tau))]
        if not real[closest]:
            warnings.warn(f"nearest eigenvalue to the target is complex: {sig[closest]}",
                          ComplexPairWarning)
    if cand.size == 0:
        raise NoRealEigenvalueNearTarget((lo, hi))
    k = cand[np.argmin(np.abs(sig[cand].real - tau))]
    sigma = float(sig[k].real)
    x = vecs[:, k].real
    x /= np.linalg.norm(x)
    sigma, x = _refine(A, T, sigma, x)
    resid = float(np.linalg.norm(A @ x - sigma * T @ x) / np.linalg.norm(A @ x))

    point = pencil.point
    prob = point.prob
    p, mode = prob.p, prob.mode
    vec = FieldPair.from_flat(prob.dom, x, "eigenfunction")
    _, t, _ = project_P(vec, mode, p)
    vec = vec * (p.b2 / p.a2 * pencil.mu0 / t)
    vec.role = "eigenfunction"
    s, _, rem = project_P(vec, mode, p)
    gamma = s - 1.0
    tilde = rem * (1.0 / pencil.eps)
    phit, psit = tilde.nodal
    psi_mean = float(np.mean(psit))
    dev = max(np.max(np.abs(phit)), np.max(np.abs(psit - psi_mean))) / abs(psi_mean)
    return EigenResult(sigma=sigma, Lambda=sigma / pencil.eps, eigfield=vec, gamma=gamma,
                       tilde=tilde, residual=resid, psi_tilde_mean=psi_mean, tilde_dev=float(dev),
                       eps=pencil.eps, eigfield_lambda_j=mode.lambda_j)


def all_eigenvalues(pencil: SpectralPencil):
    """Finite generalized eigenvalues of the pencil (dense QZ)."""
    w = sla.eigvals(pencil.A, pencil.T)
    return w[np.isfinite(w)]


def c0_diagnostic(root: ReducedRoot, p, mode) -> float:
    """The constant ``C0``; its negativity pins the limiting eigen-coordinates to ``(lambda_j, 0)``."""
    c0 = c0_constant(mode, p, root.mu0, root.s0)
    if not c0 < 0 or not c0_bracket(mode, p, root.mu0) < 0:
        raise SignViolation(f"C0 = {c0} is not negative")
    return c0


def frozen_pencil_spectrum(mode, p):
    """Finite eigenvalues of ``sigma T0 Phi = L Phi`` on X0 (eps-part switched off).

    With ``T0 = [[0, 0], [-beta lam/a2, lam/a2]]`` the first row forces a
    constant phi, which vanishes on X0; the psi-modes then give
    ``sigma_m = a2 (1 - lambda_m / lambda_j)`` for every ``m != j``.
    Returned sorted descending, computed from the assembled matrices.
    """
    dom = mode.dom
    n = dom.n
    L = L_matrix(mode, p)
    lam = mode.lambda_j
    # X0 basis: phi-modes m >= 1, psi-modes m != j (the psi_j coordinate is fixed by t = 0)
    keep_phi = np.arange(1, n)
    keep_psi = np.array([m for m in range(n) if m != mode.j])
    c = p.kernel_slope
    basis = np.zeros((2 * n, len(keep_phi) + len(keep_psi)))
    for col, m in enumerate(keep_phi):
        basis[m, col] = 1.0
        if m == mode.j:
            basis[n + m, col] = c
    for col, m in enumerate(keep_psi, start=len(keep_phi)):
        basis[n + m, col] = 1.0
    T0 = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    T0[n + idx, idx] = -p.beta * lam / p.a2
    T0[n + idx, n + idx] = lam / p.a2
    # rows restricted by selection, not by basis.T: mixing the phi_j and psi_j rows
    # would drop the algebraic constraint on phi_j and add a spurious finite eigenvalue
    rows = np.concatenate([keep_phi, n + keep_psi])
    w = sla.eigvals((L @ basis)[rows], (T0 @ basis)[rows])
    w = w[np.isfinite(w)]
    return np.sort(w.real)[::-1]


def spectrum_row(res: EigenResult):
    return [res.eps, res.sigma, res.Lambda / res.eigfield_lambda_j, res.gamma, res.tilde_dev,
            res.residual]


def write_spectrum_csv(results, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SPECTRUM_HEADER)
        for res in results:
            wr.writerow([fmt(v) for v in spectrum_row(res)])

"""Neumann cosine basis on (0, L), quadrature and the degenerate operator L.

Fields are sampled at the midpoint nodes ``x_k = (k + 1/2) L / n`` and
expanded as ``f(x) = sum_m a_m cos(m pi x / L)``.  The map between nodal
values and coefficients is a type-II DCT, so the Laplacian, the operator

    L(phi, psi) = (lap phi, lap psi + lam_j psi - c lam_j phi),   c = beta + b2/a2,

and its inverse on the complement of the kernel are all diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.fft import dct

from .errors import RhsNotInRange

TOL_RANGE = 1e-9


def to_coeffs(values, axis=-1):
    """Nodal values on the midpoint grid -> cosine coefficients."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    a = dct(values, type=2, axis=axis) / n
    idx = [slice(None)] * a.ndim
    idx[axis] = 0
    a[tuple(idx)] *= 0.5
    return a


def to_nodal(coeffs, axis=-1):
    """Cosine coefficients -> nodal values on the midpoint grid."""
    b = np.array(coeffs, dtype=float, copy=True) * 0.5
    idx = [slice(None)] * b.ndim
    idx[axis] = 0
    b[tuple(idx)] *= 2.0
    return dct(b, type=3, axis=axis)


@dataclass(frozen=True, eq=False)
class Domain1D:
    """The interval (0, L) with ``n`` midpoint collocation nodes."""

    length: float = 1.0
    n: int = 256
    dealias: bool = False

    def __post_init__(self):
        if self.n < 64 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 64, got {self.n}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @cached_property
    def x(self):
        return (np.arange(self.n) + 0.5) * self.length / self.n

    @cached_property
    def wavenumbers(self):
        return np.arange(self.n) * np.pi / self.length

    @cached_property
    def laplace_eigs(self):
        """``lambda_m = (m pi / L)^2`` for every retained cosine mode."""
        return self.wavenumbers**2

    def integrate(self, values):
        """Integral over (0, L) of a nodal field: zeroth coefficient times L."""
        return float(np.mean(values, axis=-1) * self.length)

    def synthesis_matrix(self, m=None):
        """Dense matrix taking n coefficients to nodal values on an m-point grid."""
        m = self.n if m is None else m
        xm = (np.arange(m) + 0.5) * self.length / m
        return np.cos(np.outer(xm, self.wavenumbers))

    def analysis_matrix(self, m=None):
        """Dense matrix taking nodal values on an m-point grid to the first n coefficients."""
        m = self.n if m is None else m
        xm = (np.arange(m) + 0.5) * self.length / m
        A = (2.0 / m) * np.cos(np.outer(self.wavenumbers, xm))
        A[0] *= 0.5
        return A

    @cached_property
    def laplacian_nodal(self):
        """Dense spectral Neumann Laplacian acting on nodal values."""
        C = self.synthesis_matrix()
        return C @ (-self.laplace_eigs[:, None] * self.analysis_matrix())

    def laplacian(self, values):
        """Spectral Neumann Laplacian of nodal values (last axis)."""
        return to_nodal(-self.laplace_eigs * to_coeffs(values))

    @cached_property
    def _quad_size(self):
        return 3 * self.n // 2 if self.dealias else self.n

    @cached_property
    def eval_matrix(self):
        """Coefficients -> nodal values on the grid used for nonlinear products."""
        return self.synthesis_matrix(self._quad_size)

    @cached_property
    def project_matrix(self):
        """Nodal values on the product grid -> truncated coefficients."""
        return self.analysis_matrix(self._quad_size)

    def eval_fine(self, coeffs):
        """Nodal values of coefficient arrays on the product grid (last axis)."""
        if not self.dealias:
            return to_nodal(coeffs)
        m = self._quad_size
        padded = np.zeros(np.shape(coeffs)[:-1] + (m,))
        padded[..., : self.n] = coeffs
        return to_nodal(padded)

    def project_fine(self, values):
        """Inverse of :meth:`eval_fine` followed by truncation to n modes."""
        if not self.dealias:
            return to_coeffs(values)
        return to_coeffs(values)[..., : self.n]

    def with_n(self, n):
        return Domain1D(self.length, n, self.dealias)


@dataclass(frozen=True, eq=False)
class EigenMode:
    """Simple Neumann eigenpair ``-phi_j'' = lambda_j phi_j`` with unit L2 norm."""

    dom: Domain1D
    j: int
    lambda_j: float
    amplitude: float  # cosine coefficient of phi_j, sqrt(2/L)
    phi: np.ndarray = field(repr=False)
    max_phi: float
    min_phi: float

    @property
    def m_j(self):
        return -1.0 / self.max_phi

    @property
    def M_j(self):
        return -1.0 / self.min_phi

    def profile(self, x):
        """Closed-form ``phi_j`` at arbitrary points."""
        return self.amplitude * np.cos(self.j * np.pi * np.asarray(x) / self.dom.length)

    def ell(self, mu, x=None):
        """``1 + mu * phi_j`` at the nodes (or at ``x``)."""
        ph = self.phi if x is None else self.profile(x)
        return 1.0 + mu * ph


def neumann_eigenpair(dom: Domain1D, j: int) -> EigenMode:
    if j < 1 or j >= dom.n:
        raise ValueError(f"mode index must satisfy 1 <= j < n, got {j}")
    L = dom.length
    amp = np.sqrt(2.0 / L)
    phi = amp * np.cos(j * np.pi * dom.x / L)
    # cos(j pi x / L) reaches +1 at x = 0 and -1 at x = L (j odd) or interior (j even)
    return EigenMode(dom=dom, j=j, lambda_j=(j * np.pi / L) ** 2, amplitude=amp,
                     phi=phi, max_phi=amp, min_phi=-amp)


class FieldPair:
    """Two scalar fields held as cosine coefficients, nodal values computed on demand."""

    __slots__ = ("dom", "coeffs", "role", "_nodal")

    def __init__(self, dom: Domain1D, coeffs, role: str = "state"):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (2, dom.n):
            raise ValueError(f"expected coefficient array of shape (2, {dom.n}), got {coeffs.shape}")
        self.dom = dom
        self.coeffs = coeffs
        self.role = role
        self._nodal = None

    @classmethod
    def from_nodal(cls, dom, values, role="state"):
        values = np.asarray(values, dtype=float)
        fp = cls(dom, to_coeffs(values), role)
        fp._nodal = values.copy()
        return fp

    @classmethod
    def from_functions(cls, dom, first, second, role="state"):
        x = dom.x
        v = np.vstack([np.broadcast_to(first(x), x.shape), np.broadcast_to(second(x), x.shape)])
        return cls.from_nodal(dom, v, role)

    @property
    def nodal(self):
        if self._nodal is None:
            self._nodal = to_nodal(self.coeffs)
        return self._nodal

    @property
    def first(self):
        return self.nodal[0]

    @property
    def second(self):
        return self.nodal[1]

    def copy(self, role=None):
        fp = FieldPair(self.dom, self.coeffs.copy(), self.role if role is None else role)
        if self._nodal is not None:
            fp._nodal = self._nodal.copy()
        return fp

    def flat(self):
        return self.coeffs.reshape(-1).copy()

    @classmethod
    def from_flat(cls, dom, vec, role="state"):
        return cls(dom, np.asarray(vec).reshape(2, dom.n), role)

    def __add__(self, other):
        return FieldPair(self.dom, self.coeffs + other.coeffs, self.role)

    def __sub__(self, other):
        return FieldPair(self.dom, self.coeffs - other.coeffs, self.role)

    def __mul__(self, scalar):
        return FieldPair(self.dom, self.coeffs * scalar, self.role)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldPair(self.dom, -self.coeffs, self.role)

    def sup_norm(self):
        return float(np.max(np.abs(self.nodal)))


def kernel_vectors(mode: EigenMode, p):
    """``e1 = (1, c)`` and ``e2 = (0, phi_j)`` as FieldPairs."""
    dom = mode.dom
    e1 = np.zeros((2, dom.n))
    e1[0, 0] = 1.0
    e1[1, 0] = p.kernel_slope
    e2 = np.zeros((2, dom.n))
    e2[1, mode.j] = mode.amplitude
    return FieldPair(dom, e1), FieldPair(dom, e2)


def adjoint_kernel_vectors(mode: EigenMode, p):
    """``e1* = (1/|Omega|, 0)`` and ``e2* = (-c, 1) phi_j`` as nodal arrays of shape (2, n)."""
    dom = mode.dom
    e1s = np.vstack([np.full(dom.n, 1.0 / dom.length), np.zeros(dom.n)])
    e2s = np.vstack([-p.kernel_slope * mode.phi, mode.phi])
    return e1s, e2s


def kernel_coordinates(coeffs, mode: EigenMode, p):
    """``(s, t)`` of a (2, n) coefficient array."""
    s = coeffs[0, 0]
    t = np.sqrt(mode.dom.length / 2.0) * (coeffs[1, mode.j] - p.kernel_slope * coeffs[0, mode.j])
    return float(s), float(t)


def project_P(Phi: FieldPair, mode: EigenMode, p):
    """Split ``Phi = s e1 + t e2 + remainder`` with the remainder in X0.

    ``s`` is the mean of the first component and ``t = int (psi - c phi) phi_j``.
    """
    s, t = kernel_coordinates(Phi.coeffs, mode, p)
    rem = Phi.coeffs.copy()
    rem[0, 0] -= s
    rem[1, 0] -= p.kernel_slope * s
    rem[1, mode.j] -= t * mode.amplitude
    return s, t, FieldPair(Phi.dom, rem, Phi.role)


def L_diagonals(mode: EigenMode, p):
    """Diagonal blocks of L in coefficient space: (d11, d21, d22) per mode."""
    lam = mode.dom.laplace_eigs
    d11 = -lam
    d21 = np.full_like(lam, -p.kernel_slope * mode.lambda_j)
    d22 = mode.lambda_j - lam
    return d11, d21, d22


def apply_L_coeffs(coeffs, mode: EigenMode, p):
    d11, d21, d22 = L_diagonals(mode, p)
    out = np.empty_like(coeffs)
    out[0] = d11 * coeffs[0]
    out[1] = d21 * coeffs[0] + d22 * coeffs[1]
    return out


def apply_L(Phi: FieldPair, mode: EigenMode, p) -> FieldPair:
    return FieldPair(Phi.dom, apply_L_coeffs(Phi.coeffs, mode, p), "residual")


def L_matrix(mode: EigenMode, p):
    """Dense (2n, 2n) matrix of L acting on stacked coefficient vectors."""
    d11, d21, d22 = L_diagonals(mode, p)
    n = mode.dom.n
    M = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    M[idx, idx] = d11
    M[n + idx, idx] = d21
    M[n + idx, n + idx] = d22
    return M


def solve_L_X0(rhs: FieldPair, mode: EigenMode, p, tol_range: float = TOL_RANGE) -> FieldPair:
    """Unique ``Phi*`` in X0 with ``L Phi* = rhs``; ``rhs`` must lie in Range(L).

    In the j-th mode the psi-coefficient is chosen as ``c * phi*_j`` so that
    the t-coordinate of the result vanishes (X0 membership).
    """
    r = rhs.coeffs
    s, t = kernel_coordinates(r, mode, p)
    scale = max(1.0, float(np.max(np.abs(r))))
    if abs(s) > tol_range * scale or abs(t) > tol_range * scale:
        raise RhsNotInRange(f"right-hand side has kernel coordinates s={s:.3e}, t={t:.3e}")
    lam = mode.dom.laplace_eigs
    lj, j, c = mode.lambda_j, mode.j, p.kernel_slope
    out = np.zeros_like(r)
    out[0, 1:] = -r[0, 1:] / lam[1:]
    gap = lj - lam
    gap[j] = 1.0
    out[1] = (r[1] + c * lj * out[0]) / gap
    out[1, j] = c * out[0, j]
    return FieldPair(rhs.dom, out, "state")


def adaptive_integral(func, length: float, n0: int = 256, rtol: float = 1e-12, n_max: int = 1 << 22):
    """Midpoint-rule integral of ``func(x)`` over (0, length), doubling n until converged.

    For smooth even-periodic integrands the midpoint rule is spectrally
    accurate; doubling copes with near-singular integrands close to the
    endpoints of the admissible mu-interval.
    """
    n = n0
    x = (np.arange(n) + 0.5) * length / n
    prev = float(np.mean(func(x)) * length)
    while n < n_max:
        n *= 2
        x = (np.arange(n) + 0.5) * length / n
        cur = float(np.mean(func(x)) * length)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    return prev

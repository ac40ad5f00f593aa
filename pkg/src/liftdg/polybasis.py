"""Quadrature rules and polynomial bases on the reference triangle and segment.

The reference triangle is {(x, y) : x >= 0, y >= 0, x + y <= 1} and the
reference segment is [0, 1].  Scalar bases are graded monomials
orthonormalized against a fixed high-order quadrature (two Gram/Cholesky
passes, so the orthonormality defect is at machine level).  Because the
orthonormalization is triangular in the graded monomial order and uses one
master quadrature rule, the degree-m basis is an exact prefix of every
higher-degree basis; embeddings between degrees are plain zero padding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cholesky, solve_triangular
from scipy.special import roots_jacobi

#: Largest quadrature exactness degree served by the rule factories.
MAX_QUAD_DEGREE = 20

#: Largest scalar basis degree built anywhere in the package (k+1 <= 5 plus
#: headroom for error measurement).
MASTER_DEGREE = 6


def space_dim(degree: int) -> int:
    """Dimension of the total-degree-<=degree polynomials on a triangle."""
    return (degree + 1) * (degree + 2) // 2


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature points and weights on a reference domain.

    ``points`` has shape (n, 2) for the triangle and (n,) for the segment.
    The rule integrates every polynomial of total degree <= ``exact_degree``
    exactly, and the weights sum to the reference measure (1/2 and 1).
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def npoints(self) -> int:
        return len(self.weights)


def _check_degree(degree: int) -> None:
    if not 0 <= degree <= MAX_QUAD_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (need 0..{MAX_QUAD_DEGREE})")


@lru_cache(maxsize=None)
def quad_segment(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials up to ``degree``."""
    _check_degree(degree)
    n = degree // 2 + 1
    x, w = leggauss(n)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0, degree)


@lru_cache(maxsize=None)
def quad_triangle(degree: int) -> QuadratureRule:
    """Product rule on the reference triangle exact up to ``degree``.

    Uses the collapsed-coordinate substitution x = u, y = v(1 - u); the
    Jacobi weight (1 - u) absorbs the Jacobian, so all weights stay positive
    and any degree is available without tabulated data.
    """
    _check_degree(degree)
    n = degree // 2 + 1
    xu, wu = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    u = (xu + 1.0) / 2.0
    wu = wu / 4.0  # includes the (1 - u) factor on [0, 1]
    xv, wv = leggauss(n)
    v = (xv + 1.0) / 2.0
    wv = wv / 2.0

    uu = np.repeat(u, n)
    vv = np.tile(v, n)
    pts = np.column_stack([uu, vv * (1.0 - uu)])
    wts = np.repeat(wu, n) * np.tile(wv, n)
    return QuadratureRule(pts, wts, degree)


# ---------------------------------------------------------------------------
# monomial helpers

def _triangle_exponents(degree: int) -> list[tuple[int, int]]:
    return [(t - i, i) for t in range(degree + 1) for i in range(t + 1)]


def _eval_monomials_2d(exps, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    out = np.empty((len(exps), len(pts)))
    for r, (a, b) in enumerate(exps):
        out[r] = x**a * y**b
    return out


def _eval_monomial_grads_2d(exps, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros((len(exps), len(pts), 2))
    for r, (a, b) in enumerate(exps):
        if a > 0:
            out[r, :, 0] = a * x ** (a - 1) * y**b
        if b > 0:
            out[r, :, 1] = b * x**a * y ** (b - 1)
    return out


def _orthonormal_coeffs(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Lower-triangular C with C @ values orthonormal w.r.t. the weights."""
    n = values.shape[0]
    gram = (values * weights) @ values.T
    low = cholesky(gram, lower=True)
    coeffs = solve_triangular(low, np.eye(n), lower=True)
    # second pass squeezes the orthonormality defect down to machine level
    vals2 = coeffs @ values
    gram2 = (vals2 * weights) @ vals2.T
    low2 = cholesky(gram2, lower=True)
    return solve_triangular(low2, coeffs, lower=True)


@lru_cache(maxsize=None)
def _triangle_coeff_table() -> np.ndarray:
    exps = _triangle_exponents(MASTER_DEGREE)
    rule = quad_triangle(2 * MASTER_DEGREE)
    vals = _eval_monomials_2d(exps, rule.points)
    return _orthonormal_coeffs(vals, rule.weights)


@lru_cache(maxsize=None)
def _segment_coeff_table() -> np.ndarray:
    rule = quad_segment(2 * MASTER_DEGREE)
    t = rule.points
    vals = np.vstack([t**p for p in range(MASTER_DEGREE + 1)])
    return _orthonormal_coeffs(vals, rule.weights)


class ScalarBasis:
    """Orthonormal polynomial basis of total degree <= ``degree`` on the
    reference triangle."""

    def __init__(self, degree: int):
        if not 0 <= degree <= MASTER_DEGREE:
            raise ValueError(f"basis degree {degree} outside 0..{MASTER_DEGREE}")
        self.degree = degree
        self.dim = space_dim(degree)
        self._exps = _triangle_exponents(degree)
        self._coeffs = _triangle_coeff_table()[: self.dim, : self.dim]

    def eval(self, points) -> np.ndarray:
        """Basis values, shape (dim, npoints)."""
        return self._coeffs @ _eval_monomials_2d(self._exps, points)

    def eval_grad(self, points) -> np.ndarray:
        """Basis gradients, shape (dim, npoints, 2)."""
        mono = _eval_monomial_grads_2d(self._exps, points)
        return np.einsum("ij,jpd->ipd", self._coeffs, mono)


class SegmentBasis:
    """Orthonormal polynomial basis of degree <= ``degree`` on [0, 1]."""

    def __init__(self, degree: int):
        if not 0 <= degree <= MASTER_DEGREE:
            raise ValueError(f"basis degree {degree} outside 0..{MASTER_DEGREE}")
        self.degree = degree
        self.dim = degree + 1
        self._coeffs = _segment_coeff_table()[: self.dim, : self.dim]

    def eval(self, points) -> np.ndarray:
        t = np.asarray(points, dtype=float).ravel()
        vals = np.vstack([t**p for p in range(self.dim)])
        return self._coeffs @ vals


class HomogeneousBasis:
    """Monomials of exact total degree ``degree``: x^j y^(degree-j)."""

    def __init__(self, degree: int):
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        self.degree = degree
        self.dim = degree + 1
        self._exps = [(degree - i, i) for i in range(degree + 1)]

    def eval(self, points) -> np.ndarray:
        return _eval_monomials_2d(self._exps, points)


@lru_cache(maxsize=None)
def scalar_basis(degree: int) -> ScalarBasis:
    return ScalarBasis(degree)


@lru_cache(maxsize=None)
def segment_basis(degree: int) -> SegmentBasis:
    return SegmentBasis(degree)


def eval_basis(basis, points) -> np.ndarray:
    """Value table of a basis at reference points, shape (dim, npoints)."""
    return basis.eval(points)


def eval_grad(basis, points) -> np.ndarray:
    """Gradient table of a basis at reference points, shape (dim, npoints, 2)."""
    return basis.eval_grad(points)

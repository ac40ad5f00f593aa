"""Discontinuous polynomial spaces, projections, and local RTN moment systems.

Scalar functions of degree k store one coefficient block per cell in the
pulled-back reference-orthonormal basis, so the local mass matrix of every
cell is det(J_K) times one fixed reference Gram matrix.  Vector functions are
two independent scalar components of degree l.

The local Raviart-Thomas-Nedelec space of index k on a triangle K is the span
of the full degree-k vector polynomials plus the fields p(x) * x with p
homogeneous of degree k.  A member is pinned down uniquely by its interior
moments against degree-(k-1) vector polynomials and, per element edge, its
normal-component moments against degree-k edge polynomials.  Reconstructions
are returned as coefficients in the ambient degree-(k+1) vector basis.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .mesh import Mesh
from .polybasis import (
    HomogeneousBasis,
    quad_segment,
    quad_triangle,
    scalar_basis,
    segment_basis,
    space_dim,
)


class DGScalarFunction:
    """Piecewise polynomial of degree <= ``degree``, discontinuous across cells."""

    def __init__(self, mesh: Mesh, degree: int, coeffs: np.ndarray | None = None):
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        self.mesh = mesh
        self.degree = degree
        bs = space_dim(degree)
        if coeffs is None:
            coeffs = np.zeros((mesh.n_cells, bs))
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(mesh.n_cells, bs)

    @property
    def n_dofs(self) -> int:
        return self.coeffs.size

    def eval_cell(self, cell: int, points) -> np.ndarray:
        """Values at physical points using the polynomial of one cell."""
        ref = self.mesh.to_reference(cell, points)
        return self.coeffs[cell] @ scalar_basis(self.degree).eval(ref)

    def grad_cell(self, cell: int, points) -> np.ndarray:
        """Gradients (n, 2) at physical points using one cell's polynomial."""
        ref = self.mesh.to_reference(cell, points)
        gref = np.einsum("i,ipd->pd", self.coeffs[cell], scalar_basis(self.degree).eval_grad(ref))
        return gref @ self.mesh.inv_jacobians[cell]

    def __add__(self, other):
        return DGScalarFunction(self.mesh, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DGScalarFunction(self.mesh, self.degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return DGScalarFunction(self.mesh, self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__


class DGVectorFunction:
    """Piecewise vector polynomial, two scalar components per cell."""

    def __init__(self, mesh: Mesh, degree: int, coeffs: np.ndarray | None = None):
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        self.mesh = mesh
        self.degree = degree
        bs = space_dim(degree)
        if coeffs is None:
            coeffs = np.zeros((mesh.n_cells, 2, bs))
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(mesh.n_cells, 2, bs)

    @property
    def n_dofs(self) -> int:
        return self.coeffs.size

    def eval_cell(self, cell: int, points) -> np.ndarray:
        """Values (n, 2) at physical points using one cell's polynomial."""
        ref = self.mesh.to_reference(cell, points)
        vals = scalar_basis(self.degree).eval(ref)
        return (self.coeffs[cell] @ vals).T

    def __add__(self, other):
        return DGVectorFunction(self.mesh, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DGVectorFunction(self.mesh, self.degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return DGVectorFunction(self.mesh, self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# reference mass and differentiation matrices


@lru_cache(maxsize=None)
def ref_gram(degree: int) -> np.ndarray:
    """Reference-triangle Gram matrix of the scalar basis (near identity)."""
    rule = quad_triangle(2 * degree)
    vals = scalar_basis(degree).eval(rule.points)
    return (vals * rule.weights) @ vals.T


@lru_cache(maxsize=None)
def _ref_gram_chol(degree: int):
    return cho_factor(ref_gram(degree))


def mass_solve(degree: int, rhs: np.ndarray) -> np.ndarray:
    """Solve ref_gram(degree) x = rhs along the last axis."""
    flat = np.moveaxis(np.atleast_2d(rhs), -1, 0)
    out = cho_solve(_ref_gram_chol(degree), flat.reshape(flat.shape[0], -1))
    return np.moveaxis(out.reshape(flat.shape), 0, -1).reshape(np.shape(rhs))


@lru_cache(maxsize=None)
def diff_matrices(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices D_a with (d/dxhat_a) psi_i = sum_j D_a[j, i] psi_j.

    The derivative of a degree-m basis function is expanded in the
    degree-(m-1) prefix basis; exact because the bases are hierarchical.
    """
    if degree < 1:
        raise ValueError("no differentiation matrix below degree 1")
    rule = quad_triangle(2 * degree)
    vals_lo = scalar_basis(degree - 1).eval(rule.points)
    grads = scalar_basis(degree).eval_grad(rule.points)
    out = []
    for a in (0, 1):
        rhs = (vals_lo * rule.weights) @ grads[:, :, a].T  # (bs_lo, bs_hi)
        out.append(cho_solve(_ref_gram_chol(degree - 1), rhs))
    return out[0], out[1]


def embed_scalar(u: DGScalarFunction, degree: int) -> DGScalarFunction:
    """Re-express u in a degree >= u.degree basis (exact prefix padding)."""
    if degree < u.degree:
        raise ValueError("cannot embed into a lower degree")
    out = DGScalarFunction(u.mesh, degree)
    out.coeffs[:, : u.coeffs.shape[1]] = u.coeffs
    return out


def embed_vector(sigma: DGVectorFunction, degree: int) -> DGVectorFunction:
    if degree < sigma.degree:
        raise ValueError("cannot embed into a lower degree")
    out = DGVectorFunction(sigma.mesh, degree)
    out.coeffs[:, :, : sigma.coeffs.shape[2]] = sigma.coeffs
    return out


def broken_gradient(u: DGScalarFunction, out_degree: int | None = None) -> DGVectorFunction:
    """Element-wise gradient of u, stored at vector degree ``out_degree``."""
    k = u.degree
    if out_degree is None:
        out_degree = max(k - 1, 0)
    if out_degree < k - 1:
        raise ValueError("output degree cannot hold the gradient")
    mesh = u.mesh
    out = DGVectorFunction(mesh, out_degree)
    if k == 0:
        return out
    d1, d2 = diff_matrices(k)
    bs_lo = d1.shape[0]
    # d/dx_d (u o F^-1) = sum_a invJ[a, d] * (D_a u) in reference coordinates
    ref_derivs = np.stack([u.coeffs @ d1.T, u.coeffs @ d2.T], axis=1)  # (nc, a, bs_lo)
    out.coeffs[:, :, :bs_lo] = np.einsum("cad,cab->cdb", mesh.inv_jacobians, ref_derivs)
    return out


def broken_divergence(sigma: DGVectorFunction) -> DGScalarFunction:
    """Element-wise divergence, stored at scalar degree sigma.degree - 1."""
    m = sigma.degree
    if m < 1:
        return DGScalarFunction(sigma.mesh, 0)
    d1, d2 = diff_matrices(m)
    mesh = sigma.mesh
    ref_derivs = np.stack([sigma.coeffs @ d1.T, sigma.coeffs @ d2.T], axis=1)  # (nc, a, comp, bs)
    coeffs = np.einsum("cad,cadb->cb", mesh.inv_jacobians, ref_derivs)
    return DGScalarFunction(mesh, m - 1, coeffs)


# ---------------------------------------------------------------------------
# inner products and norms


def l2_inner_scalar(u: DGScalarFunction, v: DGScalarFunction) -> float:
    g = ref_gram(u.degree)
    return float(np.einsum("c,ci,ij,cj->", u.mesh.dets, u.coeffs, g, v.coeffs))


def l2_inner_vector(s: DGVectorFunction, t: DGVectorFunction) -> float:
    g = ref_gram(s.degree)
    return float(np.einsum("c,cdi,ij,cdj->", s.mesh.dets, s.coeffs, g, t.coeffs))


def l2_norm(fn) -> float:
    if isinstance(fn, DGScalarFunction):
        return float(np.sqrt(max(l2_inner_scalar(fn, fn), 0.0)))
    return float(np.sqrt(max(l2_inner_vector(fn, fn), 0.0)))


def sup_norm(fn, quad_degree: int | None = None) -> float:
    """Max absolute value sampled at cell quadrature points and vertices."""
    rule = quad_triangle(quad_degree if quad_degree is not None else 2 * (fn.degree + 2))
    pts = np.vstack([rule.points, [[0, 0], [1, 0], [0, 1]]])
    best = 0.0
    for c in range(fn.mesh.n_cells):
        phys = fn.mesh.from_reference(c, pts)
        vals = fn.eval_cell(c, phys)
        best = max(best, float(np.abs(vals).max()))
    return best


# ---------------------------------------------------------------------------
# projection and sampling


def l2_project(f, mesh: Mesh, degree: int, quad_degree: int | None = None) -> DGScalarFunction:
    """Element-wise L2 projection of a callable f(x, y) onto degree-k space."""
    rule = quad_triangle(quad_degree if quad_degree is not None else 2 * (degree + 2) + 4)
    vals = scalar_basis(degree).eval(rule.points)  # (bs, nq)
    out = DGScalarFunction(mesh, degree)
    for c in range(mesh.n_cells):
        phys = mesh.from_reference(c, rule.points)
        fq = np.asarray(f(phys[:, 0], phys[:, 1]), dtype=float)
        rhs = vals @ (rule.weights * fq)
        out.coeffs[c] = mass_solve(degree, rhs)  # det cancels between rhs and mass
    return out


def eval_on_face(fn, face, side: str, tparams) -> np.ndarray:
    """Trace of the named side's polynomial at face parameters in [0, 1]."""
    if side == "ext":
        cell = face.K_ext
    elif side == "int":
        if not face.is_interior:
            raise ValueError("boundary face has no interior side")
        cell = face.K_int
    else:
        raise ValueError(f"side must be 'ext' or 'int', got {side!r}")
    return fn.eval_cell(cell, face.point_at(np.asarray(tparams, dtype=float)))


def random_scalar(mesh: Mesh, degree: int, rng: np.random.Generator) -> DGScalarFunction:
    return DGScalarFunction(mesh, degree, rng.standard_normal((mesh.n_cells, space_dim(degree))))


def random_vector(mesh: Mesh, degree: int, rng: np.random.Generator) -> DGVectorFunction:
    return DGVectorFunction(mesh, degree, rng.standard_normal((mesh.n_cells, 2, space_dim(degree))))


# ---------------------------------------------------------------------------
# local RTN moment systems


class RTNMomentSystem:
    """Moment system selecting the RTN subspace of index k on one cell.

    Columns of the unisolvence matrix are the moments of a spanning set of
    the local RTN space (full degree-k vector basis plus the scaled fields
    p(y) y, y the centered cell coordinate), rows are the interior and edge
    moment functionals.  ``interior_dim`` moments test against the
    degree-(k-1) vector basis; each edge contributes k+1 moments testing the
    outward normal component against the orthonormal segment basis in the
    edge parameter (endpoint order follows the cell's counterclockwise edge).
    """

    def __init__(self, mesh: Mesh, cell: int, k: int):
        if k < 1:
            raise ValueError("RTN moment systems need k >= 1")
        self.mesh = mesh
        self.cell = cell
        self.k = k
        self.ambient_degree = k + 1
        bs1 = space_dim(k + 1)
        self.interior_dim = 2 * space_dim(k - 1)
        self.face_dim = k + 1
        self.n_dofs = self.interior_dim + 3 * self.face_dim
        if self.n_dofs != (k + 1) * (k + 3):
            raise AssertionError("RTN dimension bookkeeping is off")

        self._span = self._spanning_coeffs(bs1)
        moments = np.vstack([self._interior_rows(bs1), self._edge_rows(bs1)])
        system = moments @ self._span
        self.condition_number = float(np.linalg.cond(system))
        try:
            self._lu = lu_factor(system)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise np.linalg.LinAlgError(
                f"singular RTN moment matrix on cell {cell} (degenerate geometry?)"
            ) from exc
        self._moments = moments

    # spanning set ---------------------------------------------------------

    def _spanning_coeffs(self, bs1: int) -> np.ndarray:
        mesh, c, k = self.mesh, self.cell, self.k
        span = np.zeros((2 * bs1, self.n_dofs))
        bs_k = space_dim(k)
        for d in range(2):
            for i in range(bs_k):
                span[d * bs1 + i, d * bs_k + i] = 1.0
        # fields p(y) y with p homogeneous of degree k, y centered and scaled
        rule = quad_triangle(2 * (k + 2))
        phys = mesh.from_reference(c, rule.points)
        y = (phys - mesh.centroids[c]) / mesh.h_K[c]
        pvals = HomogeneousBasis(k).eval(y)  # (k+1, nq)
        basis_vals = scalar_basis(k + 1).eval(rule.points)  # (bs1, nq)
        for j in range(k + 1):
            col = 2 * bs_k + j
            for d in range(2):
                rhs = basis_vals @ (rule.weights * pvals[j] * y[:, d])
                span[d * bs1 : (d + 1) * bs1, col] = mass_solve(k + 1, rhs)
        return span

    # moment functionals ----------------------------------------------------

    def _interior_rows(self, bs1: int) -> np.ndarray:
        # moments of the ambient basis against the degree-(k-1) prefix basis
        g = ref_gram(self.ambient_degree) * self.mesh.dets[self.cell]
        bs_lo = space_dim(self.k - 1)
        rows = np.zeros((self.interior_dim, 2 * bs1))
        for d in range(2):
            rows[d * bs_lo : (d + 1) * bs_lo, d * bs1 : (d + 1) * bs1] = g[:bs_lo, :]
        return rows

    def _edge_rows(self, bs1: int) -> np.ndarray:
        mesh, c, k = self.mesh, self.cell, self.k
        rule = quad_segment(2 * k + 2)
        test = segment_basis(k).eval(rule.points)  # (k+1, nq)
        rows = np.zeros((3 * self.face_dim, 2 * bs1))
        for e in range(3):
            p0, p1 = mesh.edge_endpoints(c, e)
            phys = p0[None, :] + rule.points[:, None] * (p1 - p0)[None, :]
            length = float(np.linalg.norm(p1 - p0))
            n_out = mesh.outward_normal(c, e)
            vals = scalar_basis(k + 1).eval(mesh.to_reference(c, phys))  # (bs1, nq)
            block = (test * rule.weights * length) @ vals.T  # (k+1, bs1)
            r0 = e * self.face_dim
            for d in range(2):
                rows[r0 : r0 + self.face_dim, d * bs1 : (d + 1) * bs1] = n_out[d] * block
        return rows

    # public API -------------------------------------------------------------

    def reconstruct(self, interior_values, face_values) -> np.ndarray:
        """Field with the prescribed moments, as ambient (2, bs) coefficients.

        ``interior_values`` has length interior_dim (component-major order of
        the degree-(k-1) test basis); ``face_values`` has shape (3, k+1)
        with normal components taken along the cell's outward normals.
        """
        interior_values = np.asarray(interior_values, dtype=float).ravel()
        face_values = np.asarray(face_values, dtype=float).reshape(3, self.face_dim)
        if len(interior_values) != self.interior_dim:
            raise ValueError(
                f"expected {self.interior_dim} interior moment values, got {len(interior_values)}"
            )
        rhs = np.concatenate([interior_values, face_values.ravel()])
        span_coeffs = lu_solve(self._lu, rhs)
        ambient = self._span @ span_coeffs
        return ambient.reshape(2, -1)

    def moments_of(self, ambient_coeffs) -> tuple[np.ndarray, np.ndarray]:
        """Interior and edge moments of an ambient-coefficient field."""
        vec = np.asarray(ambient_coeffs, dtype=float).reshape(-1)
        vals = self._moments @ vec
        interior = vals[: self.interior_dim]
        face = vals[self.interior_dim :].reshape(3, self.face_dim)
        return interior, face


def rtn_from_moments(mesh: Mesh, cell: int, k: int, interior_values, face_values) -> np.ndarray:
    """One-shot RTN reconstruction; see RTNMomentSystem.reconstruct."""
    return RTNMomentSystem(mesh, cell, k).reconstruct(interior_values, face_values)

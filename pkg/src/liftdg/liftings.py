"""Jump and average trace operators and the jump lifting machinery.

Conventions: on an interior face the jump is (exterior trace) - (interior
trace) and the average is their mean, where the face normal points out of
the exterior cell; on a boundary face both operators return the trace
itself.  The vector lifting of face data phi is the unique field r in the
degree-l discontinuous vector space with

    (r, sigma)_Omega = sum over all faces of int_F phi {sigma . n_F} ds

for every sigma in that space; the scalar lifting tests against degree-k
scalars and sums over interior faces only.  Both solves are block diagonal
per cell.  The lifted gradient subtracts the vector lifting of the jumps
from the element-wise gradient; the lifted divergence subtracts the scalar
lifting of the normal-component jumps from the element-wise divergence.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .mesh import Face, Mesh
from .polybasis import quad_segment, scalar_basis, space_dim
from .spaces import (
    DGScalarFunction,
    DGVectorFunction,
    broken_divergence,
    broken_gradient,
    diff_matrices,
    mass_solve,
    ref_gram,
)


def _face_quad_degree(k: int, ell: int) -> int:
    return 2 * (max(k, ell) + 2)


class FaceQuadrature:
    """Segment quadrature mapped onto every face, with cached trace tables."""

    def __init__(self, mesh: Mesh, degree: int):
        self.mesh = mesh
        self.degree = degree
        self.rule = quad_segment(degree)
        self.points = [f.point_at(self.rule.points) for f in mesh.faces]
        self._traces: dict[tuple[int, int, int], np.ndarray] = {}

    def trace_table(self, face: Face, cell: int, degree: int) -> np.ndarray:
        """Values of the cell's degree-``degree`` basis at the face points, (bs, nq)."""
        key = (face.index, cell, degree)
        tab = self._traces.get(key)
        if tab is None:
            ref = self.mesh.to_reference(cell, self.points[face.index])
            tab = scalar_basis(degree).eval(ref)
            self._traces[key] = tab
        return tab


def face_quadrature(mesh: Mesh, degree: int) -> FaceQuadrature:
    cache = getattr(mesh, "_face_quad_cache", None)
    if cache is None:
        cache = {}
        mesh._face_quad_cache = cache
    fq = cache.get(degree)
    if fq is None:
        fq = FaceQuadrature(mesh, degree)
        cache[degree] = fq
    return fq


# ---------------------------------------------------------------------------
# pointwise trace operators


def _side_values(fn, face: Face, tparams, side: str):
    cell = face.K_ext if side == "ext" else face.K_int
    return fn.eval_cell(cell, face.point_at(np.asarray(tparams, dtype=float)))


def jump(fn, face: Face, tparams) -> np.ndarray:
    """Jump of a scalar or vector function at face parameters in [0, 1]."""
    ext = _side_values(fn, face, tparams, "ext")
    if not face.is_interior:
        return ext
    return ext - _side_values(fn, face, tparams, "int")


def average(fn, face: Face, tparams) -> np.ndarray:
    """Average of a scalar or vector function at face parameters in [0, 1]."""
    ext = _side_values(fn, face, tparams, "ext")
    if not face.is_interior:
        return ext
    return 0.5 * (ext + _side_values(fn, face, tparams, "int"))


def normal_jump(sigma: DGVectorFunction, face: Face, tparams) -> np.ndarray:
    """Jump of sigma . n_F with the face's fixed normal on both sides."""
    return jump(sigma, face, tparams) @ face.n_F


def normal_average(sigma: DGVectorFunction, face: Face, tparams) -> np.ndarray:
    return average(sigma, face, tparams) @ face.n_F


# ---------------------------------------------------------------------------
# face data


class FaceData:
    """Scalar face data sampled at the shared face quadrature points.

    ``values`` has shape (n_faces, nq).  The sampling degree bounds the
    polynomial degree for which lifting identities hold exactly: data of
    trace degree p lifted against degree-l fields needs degree >= p + l.
    """

    def __init__(self, mesh: Mesh, quad_degree: int, values: np.ndarray):
        self.mesh = mesh
        self.quad_degree = quad_degree
        nq = quad_segment(quad_degree).npoints
        self.values = np.asarray(values, dtype=float).reshape(len(mesh.faces), nq)

    @classmethod
    def zeros(cls, mesh: Mesh, quad_degree: int) -> "FaceData":
        nq = quad_segment(quad_degree).npoints
        return cls(mesh, quad_degree, np.zeros((len(mesh.faces), nq)))

    @classmethod
    def from_jump(cls, u: DGScalarFunction, quad_degree: int) -> "FaceData":
        mesh = u.mesh
        fq = face_quadrature(mesh, quad_degree)
        out = cls.zeros(mesh, quad_degree)
        for f in mesh.faces:
            vals = u.coeffs[f.K_ext] @ fq.trace_table(f, f.K_ext, u.degree)
            if f.is_interior:
                vals = vals - u.coeffs[f.K_int] @ fq.trace_table(f, f.K_int, u.degree)
            out.values[f.index] = vals
        return out

    @classmethod
    def from_normal_jump(cls, sigma: DGVectorFunction, quad_degree: int) -> "FaceData":
        mesh = sigma.mesh
        fq = face_quadrature(mesh, quad_degree)
        out = cls.zeros(mesh, quad_degree)
        for f in mesh.faces:
            tab = fq.trace_table(f, f.K_ext, sigma.degree)
            vals = (sigma.coeffs[f.K_ext] @ tab).T @ f.n_F
            if f.is_interior:
                tab_i = fq.trace_table(f, f.K_int, sigma.degree)
                vals = vals - (sigma.coeffs[f.K_int] @ tab_i).T @ f.n_F
            out.values[f.index] = vals
        return out

    @classmethod
    def from_callable(cls, mesh: Mesh, func, quad_degree: int) -> "FaceData":
        fq = face_quadrature(mesh, quad_degree)
        out = cls.zeros(mesh, quad_degree)
        for f in mesh.faces:
            pts = fq.points[f.index]
            out.values[f.index] = func(pts[:, 0], pts[:, 1])
        return out


# ---------------------------------------------------------------------------
# lifting operators


def lift_vector(phi: FaceData, ell: int) -> DGVectorFunction:
    """Vector lifting of face data into the degree-``ell`` vector space."""
    mesh = phi.mesh
    fq = face_quadrature(mesh, phi.quad_degree)
    w = fq.rule.weights
    rhs = np.zeros((mesh.n_cells, 2, space_dim(ell)))
    for f in mesh.faces:
        data = phi.values[f.index] * w * f.h_F
        receivers = ((f.K_ext, 1.0),) if not f.is_interior else ((f.K_ext, 0.5), (f.K_int, 0.5))
        for cell, weight in receivers:
            tab = fq.trace_table(f, cell, ell)  # (bs, nq)
            contrib = tab @ data
            rhs[cell, 0] += weight * f.n_F[0] * contrib
            rhs[cell, 1] += weight * f.n_F[1] * contrib
    coeffs = mass_solve(ell, rhs) / phi.mesh.dets[:, None, None]
    return DGVectorFunction(mesh, ell, coeffs)


def lift_scalar(phi: FaceData, k: int) -> DGScalarFunction:
    """Scalar lifting of interior-face data into the degree-``k`` space."""
    mesh = phi.mesh
    fq = face_quadrature(mesh, phi.quad_degree)
    w = fq.rule.weights
    rhs = np.zeros((mesh.n_cells, space_dim(k)))
    for f in mesh.faces:
        if not f.is_interior:
            continue  # data on boundary faces is deliberately ignored
        data = phi.values[f.index] * w * f.h_F
        for cell in (f.K_ext, f.K_int):
            tab = fq.trace_table(f, cell, k)
            rhs[cell] += 0.5 * (tab @ data)
    coeffs = mass_solve(k, rhs) / mesh.dets[:, None]
    return DGScalarFunction(mesh, k, coeffs)


def lifted_gradient(u: DGScalarFunction, lifting_degree: int | None = None) -> DGVectorFunction:
    """Element-wise gradient minus the vector lifting of the jumps of u."""
    k = u.degree
    ell = k + 1 if lifting_degree is None else lifting_degree
    if ell < k:
        raise ValueError(f"lifting degree {ell} below scalar degree {k}")
    phi = FaceData.from_jump(u, _face_quad_degree(k, ell))
    return broken_gradient(u, ell) - lift_vector(phi, ell)


def lifted_divergence(sigma: DGVectorFunction) -> DGScalarFunction:
    """Element-wise divergence minus the scalar lifting of normal jumps."""
    k = sigma.degree - 1
    if k < 0:
        raise ValueError("need vector degree >= 1")
    phi = FaceData.from_normal_jump(sigma, _face_quad_degree(k, sigma.degree))
    return broken_divergence(sigma) - lift_scalar(phi, k)


# ---------------------------------------------------------------------------
# operator matrices (shared by the eigensolves and the Poisson assembly)


def lifted_gradient_matrix(mesh: Mesh, k: int, ell: int | None = None) -> sp.csr_matrix:
    """Matrix of the lifted gradient from degree-k scalars to degree-l vectors.

    Degrees of freedom are ordered cell-major; within a cell the scalar
    block is the basis index and the vector block is component-major.  The
    matrix couples a cell to itself and its face neighbors only.
    """
    if ell is None:
        ell = k + 1
    if ell < k:
        raise ValueError(f"lifting degree {ell} below scalar degree {k}")
    bs_k = space_dim(k)
    bs_l = space_dim(ell)
    n_rows = mesh.n_cells * 2 * bs_l
    n_cols = mesh.n_cells * bs_k

    rows, cols, vals = [], [], []

    def add_block(block: np.ndarray, row0: int, col0: int) -> None:
        r, c = np.nonzero(np.ones_like(block))
        rows.append(r + row0)
        cols.append(c + col0)
        vals.append(block.ravel())

    # element-wise gradient, embedded by prefix padding
    if k >= 1:
        d1, d2 = diff_matrices(k)
        for c in range(mesh.n_cells):
            inv = mesh.inv_jacobians[c]
            for d in range(2):
                block = inv[0, d] * d1 + inv[1, d] * d2  # (bs_{k-1}, bs_k)
                add_block(block, c * 2 * bs_l + d * bs_l, c * bs_k)

    # minus the lifting of the jumps
    fq = face_quadrature(mesh, _face_quad_degree(k, ell))
    w = fq.rule.weights
    chol = cho_factor(ref_gram(ell))
    for f in mesh.faces:
        sources = ((f.K_ext, 1.0),) if not f.is_interior else ((f.K_ext, 1.0), (f.K_int, -1.0))
        receivers = ((f.K_ext, 1.0),) if not f.is_interior else ((f.K_ext, 0.5), (f.K_int, 0.5))
        for r_cell, r_weight in receivers:
            tab_r = fq.trace_table(f, r_cell, ell)  # (bs_l, nq)
            proj = cho_solve(chol, tab_r * (w * f.h_F)) / mesh.dets[r_cell]  # (bs_l, nq)
            for s_cell, s_sign in sources:
                tab_s = fq.trace_table(f, s_cell, k)  # (bs_k, nq)
                base = (r_weight * s_sign) * (proj @ tab_s.T)  # (bs_l, bs_k)
                for d in range(2):
                    add_block(
                        -f.n_F[d] * base,
                        r_cell * 2 * bs_l + d * bs_l,
                        s_cell * bs_k,
                    )

    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, n_cols),
    )
    return mat.tocsr()


def vector_mass_matrix(mesh: Mesh, degree: int) -> sp.csr_matrix:
    """Block-diagonal mass matrix of the degree-``degree`` vector space."""
    g = ref_gram(degree)
    block = np.zeros((2 * len(g), 2 * len(g)))
    block[: len(g), : len(g)] = g
    block[len(g) :, len(g) :] = g
    return sp.kron(sp.diags(mesh.dets), sp.csr_matrix(block)).tocsr()


def scalar_mass_matrix(mesh: Mesh, degree: int) -> sp.csr_matrix:
    """Block-diagonal mass matrix of the degree-``degree`` scalar space."""
    return sp.kron(sp.diags(mesh.dets), sp.csr_matrix(ref_gram(degree))).tocsr()

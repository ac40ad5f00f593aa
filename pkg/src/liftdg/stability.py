"""Norm equivalence of the lifted gradient: constants, certificates, kernel.

The DG norm squared is the broken H1 seminorm squared plus the h_F-weighted
L2 norms of the jumps over all faces, boundary included, so it is a genuine
norm on the discontinuous space.  ``equivalence_constants`` measures the
extremal ratios of |lifted gradient| to the DG norm by a dense generalized
eigensolve.  ``build_supremizer`` constructs, cell by cell from RTN moment
systems, the certificate field whose pairing with the lifted gradient
bounds the squared DG norm from below; on face-regular meshes its averaged
normal trace reproduces the scaled jumps exactly (with a factor 1/2 on
faces regular with respect to only one cell).  ``run_counterexample``
builds the explicit criss-cross function whose equal-order lifted gradient
vanishes identically even though its DG norm does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .liftings import (
    average,
    face_quadrature,
    jump,
    lifted_gradient,
    lifted_gradient_matrix,
    normal_average,
    vector_mass_matrix,
)
from .mesh import FaceCase, Mesh, builtin_mesh, require_face_regular
from .polybasis import quad_segment, quad_triangle, segment_basis, space_dim
from .report import Check, ExperimentReport
from .spaces import (
    DGScalarFunction,
    DGVectorFunction,
    RTNMomentSystem,
    broken_gradient,
    diff_matrices,
    l2_inner_vector,
    l2_norm,
    l2_project,
    ref_gram,
    scalar_mass_matrix,
)


@dataclass(frozen=True)
class DGNorm:
    """Value and squared parts of the jump-augmented broken H1 norm."""

    value: float
    grad_part: float  # sum_K |grad u|^2_K
    jump_part: float  # sum_F h_F^-1 |[u]|^2_F


def dg_norm(u: DGScalarFunction) -> DGNorm:
    mesh = u.mesh
    grad = broken_gradient(u)
    g = ref_gram(grad.degree)
    grad_part = float(np.einsum("c,cdi,ij,cdj->", mesh.dets, grad.coeffs, g, grad.coeffs))

    fq = face_quadrature(mesh, 2 * (u.degree + 2))
    w = fq.rule.weights
    jump_part = 0.0
    for f in mesh.faces:
        jv = u.coeffs[f.K_ext] @ fq.trace_table(f, f.K_ext, u.degree)
        if f.is_interior:
            jv = jv - u.coeffs[f.K_int] @ fq.trace_table(f, f.K_int, u.degree)
        # h_F^-1 * int_F [u]^2 ds = sum_q w_q [u](t_q)^2 (the lengths cancel)
        jump_part += float(w @ (jv * jv))
    return DGNorm(float(np.sqrt(grad_part + jump_part)), grad_part, jump_part)


def dg_norm_gram(mesh: Mesh, k: int) -> np.ndarray:
    """Dense Gram matrix of the squared DG norm on the degree-k space."""
    bs = space_dim(k)
    n = mesh.n_cells * bs
    out = np.zeros((n, n))

    if k >= 1:
        d1, d2 = diff_matrices(k)
        g_lo = ref_gram(k - 1)
        for c in range(mesh.n_cells):
            inv = mesh.inv_jacobians[c]
            block = np.zeros((bs, bs))
            for d in range(2):
                gd = inv[0, d] * d1 + inv[1, d] * d2
                block += gd.T @ g_lo @ gd
            sl = slice(c * bs, (c + 1) * bs)
            out[sl, sl] += mesh.dets[c] * block

    fq = face_quadrature(mesh, 2 * (k + 2))
    w = fq.rule.weights
    for f in mesh.faces:
        sides = [(f.K_ext, 1.0)]
        if f.is_interior:
            sides.append((f.K_int, -1.0))
        tabs = [(c, s, fq.trace_table(f, c, k)) for c, s in sides]
        for c1, s1, t1 in tabs:
            for c2, s2, t2 in tabs:
                block = (s1 * s2) * ((t1 * w) @ t2.T)
                out[c1 * bs : (c1 + 1) * bs, c2 * bs : (c2 + 1) * bs] += block
    return out


def lifted_gradient_gram(mesh: Mesh, k: int, ell: int) -> np.ndarray:
    """Dense Gram matrix of (u, v) -> (G u, G v)_Omega at lifting degree l."""
    g = lifted_gradient_matrix(mesh, k, ell)
    m = vector_mass_matrix(mesh, ell)
    a = (g.T @ (m @ g)).toarray()
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class EquivalenceReport:
    """Extremal ratios of |G u|_L2 to the DG norm over the whole space."""

    mesh_id: str
    k: int
    ell: int
    c_min: float
    c_max: float


def equivalence_constants(mesh: Mesh, k: int, ell: Optional[int] = None, mesh_id: str = "") -> EquivalenceReport:
    """Dense symmetric-definite eigensolve for the norm equivalence constants.

    c_min and c_max are the square roots of the extremal eigenvalues of
    A x = lambda B x with A the lifted-gradient Gram matrix and B the DG
    norm Gram matrix.  B is positive definite on any valid mesh; a failure
    to factor it signals an assembly bug, not a mesh property.
    """
    if ell is None:
        ell = k + 1
    a = lifted_gradient_gram(mesh, k, ell)
    b = dg_norm_gram(mesh, k)
    try:
        eigvals = scipy.linalg.eigh(a, b, eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise scipy.linalg.LinAlgError(
            "DG norm Gram matrix is not positive definite; assembly bug"
        ) from exc
    c_min = float(np.sqrt(max(eigvals[0], 0.0)))
    c_max = float(np.sqrt(max(eigvals[-1], 0.0)))
    return EquivalenceReport(mesh_id=mesh_id, k=k, ell=ell, c_min=c_min, c_max=c_max)


def poincare_constant(mesh: Mesh, k: int) -> float:
    """Largest ratio of |u|_L2 to the DG norm over the degree-k space."""
    m = scalar_mass_matrix(mesh, k).toarray()
    b = dg_norm_gram(mesh, k)
    eigvals = scipy.linalg.eigh(m, b, eigvals_only=True)
    return float(np.sqrt(max(eigvals[-1], 0.0)))


# ---------------------------------------------------------------------------
# certificate field of the lower bound


def build_supremizer(u: DGScalarFunction) -> DGVectorFunction:
    """Certificate field in the degree-(k+1) vector space, cell by cell.

    On every cell the field lies in the local RTN space: its interior
    moments match the cell gradient of u against degree-(k-1) vectors, and
    on each element edge that is a mesh face its outward-normal moments
    equal minus the h_F-scaled jump of u (signed to the face normal); edges
    that are not mesh faces get vanishing normal moments.  Requires a
    face-regular mesh, k >= 1.
    """
    mesh = u.mesh
    k = u.degree
    if k < 1:
        raise ValueError("supremizer construction needs k >= 1")
    require_face_regular(mesh)

    edge_map = mesh.edge_face_map
    faces = mesh.faces
    grad = broken_gradient(u)  # degree k-1 coefficients
    g_lo = ref_gram(k - 1)
    rule = quad_segment(2 * k + 2)
    test = segment_basis(k).eval(rule.points)  # (k+1, nq)

    out = DGVectorFunction(mesh, k + 1)
    for c in range(mesh.n_cells):
        system = RTNMomentSystem(mesh, c, k)
        # interior: (tau, mu)_K = (grad u, mu)_K for the prefix test basis
        interior = (mesh.dets[c] * (g_lo @ grad.coeffs[c].T).T).ravel()

        face_vals = np.zeros((3, k + 1))
        for e in range(3):
            fid = edge_map.get((c, e))
            if fid is None:
                continue  # edge is subdivided by hanging nodes: zero moments
            f = faces[fid]
            p0, p1 = mesh.edge_endpoints(c, e)
            pts = p0[None, :] + rule.points[:, None] * (p1 - p0)[None, :]
            length = float(np.linalg.norm(p1 - p0))
            jv = u.eval_cell(f.K_ext, pts)
            if f.is_interior:
                jv = jv - u.eval_cell(f.K_int, pts)
            n_out = mesh.outward_normal(c, e)
            sign = 1.0 if float(n_out @ f.n_F) > 0.0 else -1.0
            # int_E (tau . n_out) q ds = -sign * h_F^-1 int_E [u] q ds
            face_vals[e] = -sign / f.h_F * (test @ (rule.weights * length * jv))
        out.coeffs[c] = system.reconstruct(interior, face_vals)
    return out


def supremizer_pairing(u: DGScalarFunction, tau: DGVectorFunction) -> float:
    """Integral of (lifted gradient of u) . tau over the domain."""
    return l2_inner_vector(lifted_gradient(u, tau.degree), tau)


def check_upper_bound(u: DGScalarFunction, tau: DGVectorFunction) -> float:
    """Ratio |tau|_L2 / |u|_dg used to monitor the boundedness constant."""
    denom = dg_norm(u).value
    if denom == 0.0:
        raise ValueError("upper-bound ratio is undefined for u = 0")
    return l2_norm(tau) / denom


def face_identity_residuals(u: DGScalarFunction, tau: DGVectorFunction):
    """Max pointwise residual of the averaged-normal-trace identity per face.

    For each face the identity reads {tau . n_F} = factor * (-h_F^-1 [u])
    with factor 1 on boundary faces and interior faces regular on both
    sides, and 1/2 on interior faces regular on exactly one side.  Returns
    a list of (face_case, residual) pairs.
    """
    mesh = u.mesh
    t = quad_segment(2 * u.degree + 2).points
    out = []
    for f in mesh.faces:
        factor = 1.0 if f.case in (FaceCase.BOUNDARY, FaceCase.INTERIOR_REGULAR_BOTH) else 0.5
        lhs = normal_average(tau, f, t)
        rhs = -factor / f.h_F * jump(u, f, t)
        out.append((f.case, float(np.abs(lhs - rhs).max())))
    return out


# ---------------------------------------------------------------------------
# the equal-order counterexample


def crisscross_kernel_function() -> tuple[Mesh, DGScalarFunction]:
    """The explicit piecewise-linear function on the criss-cross mesh whose
    equal-order lifted gradient vanishes: zero cell means, zero face
    averages, but a strictly positive DG norm."""
    mesh = builtin_mesh("criss_cross")
    pieces = (
        lambda x, y: y + 2.0 / 3.0,   # bottom cell
        lambda x, y: x - 2.0 / 3.0,   # right cell
        lambda x, y: -y + 2.0 / 3.0,  # top cell
        lambda x, y: -x - 2.0 / 3.0,  # left cell
    )
    u = DGScalarFunction(mesh, 1)
    for c, piece in enumerate(pieces):
        single = l2_project(piece, mesh, 1)
        u.coeffs[c] = single.coeffs[c]
    return mesh, u


def run_counterexample() -> ExperimentReport:
    """Verify the equal-order instability on the criss-cross mesh.

    Checks: (i) the face averages of the kernel function vanish on all
    interior faces, (ii) its cell means vanish, (iii) its equal-order
    lifted gradient vanishes, (iv) its degree-raised lifted gradient obeys
    the lower bound with the eigensolve constant.
    """
    mesh, u = crisscross_kernel_function()
    norm = dg_norm(u)

    t = quad_segment(6).points
    max_avg = max(
        float(np.abs(average(u, f, t)).max()) for f in mesh.faces if f.is_interior
    )

    rule = quad_triangle(4)
    max_mean = 0.0
    for c in range(mesh.n_cells):
        phys = mesh.from_reference(c, rule.points)
        vals = u.eval_cell(c, phys)
        max_mean = max(max_mean, abs(float(mesh.dets[c] * (rule.weights @ vals))))

    equal_order = l2_norm(lifted_gradient(u, 1))
    raised = l2_norm(lifted_gradient(u, 2))
    eq = equivalence_constants(mesh, 1, 2, mesh_id="criss_cross")

    checks = [
        Check("interior_face_averages_vanish", max_avg, max_avg <= 1e-13),
        Check("cell_means_vanish", max_mean, max_mean <= 1e-13),
        Check(
            "equal_order_lifted_gradient_vanishes",
            equal_order,
            equal_order <= 1e-10 * norm.value,
        ),
        Check(
            "raised_order_lower_bound",
            raised / norm.value,
            raised >= eq.c_min * norm.value - 1e-10,
        ),
    ]
    return ExperimentReport(
        experiment="counterexample",
        mesh="criss_cross",
        k=1,
        ell=1,
        c_min=eq.c_min,
        c_max=eq.c_max,
        checks=checks,
        metadata={"dg_norm": norm.value, "dg_norm_sq_parts": [norm.grad_part, norm.jump_part]},
    )

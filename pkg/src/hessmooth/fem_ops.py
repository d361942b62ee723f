"""
Linear finite-element operators on triangle meshes and the energies built
from them.

Per-face vectors are stacked coordinate-major: ``G`` has rows
``[G_x; G_y(; G_z)]`` with m rows per block. 2D meshes are handled by
embedding them at z = 0.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from .domain import TriMesh
from .errors import DomainError
from .fd_ops import blend_energy
from .sparse import (
    BoundaryCondition,
    DiscreteEnergy,
    EnergyKind,
    assemble,
    canonical,
    diagonal,
    symmetrize,
)

logger = logging.getLogger(__name__)


def _embedded(mesh: TriMesh) -> np.ndarray:
    P = mesh.positions
    if mesh.dim == 2:
        return np.column_stack([P, np.zeros(mesh.n)])
    return P


def face_geometry(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit face normals (m, 3) and hat-function gradients (m, 3 corners, 3).

    The gradient of the hat function at corner c is N × (p_{c+2} − p_{c+1}) / 2A.
    """
    P = _embedded(mesh)
    T = mesh.triangles
    corners = P[T]  # (m, 3, 3)
    normal = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    double_area = np.linalg.norm(normal, axis=1)
    N = normal / double_area[:, None]
    opposite = np.roll(corners, -2, axis=1) - np.roll(corners, -1, axis=1)
    grads = np.cross(N[:, None, :], opposite) / double_area[:, None, None]
    return N, grads


def cotangent_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """Positive-semidefinite cotangent Laplacian; off-diagonals are −½·cot of the opposite angles."""
    P = _embedded(mesh)
    T = mesh.triangles
    rows, cols, vals = [], [], []
    for c in range(3):
        i, j, k = T[:, c], T[:, (c + 1) % 3], T[:, (c + 2) % 3]
        e1 = P[j] - P[i]
        e2 = P[k] - P[i]
        cot = np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1)
        half = 0.5 * cot
        rows += [j, k, j, k]
        cols += [k, j, j, k]
        vals += [-half, -half, half, half]
    L = assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (mesh.n, mesh.n))
    return symmetrize(L)


def lumped_mass(mesh: TriMesh) -> sp.csr_matrix:
    """One third of the incident face area per vertex."""
    areas = np.repeat(mesh.face_areas / 3.0, 3)
    return diagonal(np.bincount(mesh.triangles.reshape(-1), weights=areas, minlength=mesh.n))


@dataclass(frozen=True, eq=False)
class FemOperators:
    """Linear-element operators of one mesh, including the matrix divergence over interior vertices."""

    mesh: TriMesh
    L: sp.csr_matrix
    M: sp.csr_matrix
    G: sp.csr_matrix
    A: sp.csr_matrix
    D: sp.csr_matrix
    Mtilde: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def interior(self) -> np.ndarray:
        return self.mesh.interior_vertices

    def pointwise_hessian(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        return pointwise_hessian(self)

    def pointwise_laplacian(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        return pointwise_laplacian(self)


def _gradient(mesh: TriMesh) -> sp.csr_matrix:
    _, grads = face_geometry(mesh)
    d, m = mesh.dim, mesh.m
    faces = np.arange(m)
    rows, cols, vals = [], [], []
    for a in range(d):
        for c in range(3):
            rows.append(a * m + faces)
            cols.append(mesh.triangles[:, c])
            vals.append(grads[:, c, a])
    return assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (d * m, mesh.n))


def build_fem_operators(mesh: TriMesh) -> FemOperators:
    """
    Assemble L, M, G, A and the interior-vertex matrix divergence D.

    D is ``kron(I_d, [G_x(:, i) ... G_d(:, i)])`` and M̃ repeats M(i, i)
    d² times, one copy per Hessian entry.
    """
    d, m = mesh.dim, mesh.m
    L = cotangent_laplacian(mesh)
    M = lumped_mass(mesh)
    G = _gradient(mesh)
    A = diagonal(np.tile(mesh.face_areas, d))

    interior = mesh.interior_vertices
    G_interior = G[:, interior]
    row_block = sp.hstack([G_interior[a * m:(a + 1) * m] for a in range(d)])
    D = canonical(sp.kron(sp.identity(d), row_block))
    Mtilde = diagonal(np.tile(M.diagonal()[interior], d * d))
    logger.debug("FEM operators: n=%d m=%d d=%d interior=%d", mesh.n, m, d, interior.size)
    return FemOperators(mesh, L, M, G, A, D, Mtilde)


def _require_interior(ops: FemOperators) -> None:
    if ops.interior.size == 0:
        raise DomainError("mesh has no interior vertices")


def pointwise_hessian(ops: FemOperators) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Per-interior-vertex Hessian entries M̃⁻¹DᵀAG and their weights M̃.

    ‖√M̃ · (M̃⁻¹DᵀAG) u‖² is the squared Hessian energy of u.
    """
    _require_interior(ops)
    C = ops.D.T @ ops.A @ ops.G
    Minv = diagonal(1.0 / ops.Mtilde.diagonal())
    return canonical(Minv @ C), ops.Mtilde


def pointwise_laplacian(ops: FemOperators) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Per-interior-vertex Laplacian M(i,i)⁻¹L(i,a) and weights M(i,i)."""
    _require_interior(ops)
    interior = ops.interior
    mass = ops.M.diagonal()[interior]
    return canonical(diagonal(1.0 / mass) @ ops.L[interior]), diagonal(mass)


def fem_hessian_energy(ops: FemOperators) -> DiscreteEnergy:
    """
    Q = GᵀA D M̃⁻¹ DᵀA G.

    Raises:
        DomainError: the mesh has no interior vertices
    """
    _require_interior(ops)
    C = ops.D.T @ ops.A @ ops.G
    Q = C.T @ diagonal(1.0 / ops.Mtilde.diagonal()) @ C
    B, W = pointwise_hessian(ops)
    return DiscreteEnergy(symmetrize(Q), ops.M, EnergyKind.HESSIAN_NATURAL, ops.mesh, B=B, W=W)


def fem_laplacian_energy(ops: FemOperators, bc: BoundaryCondition) -> DiscreteEnergy:
    if bc is BoundaryCondition.ZERO_NEUMANN:
        Q = ops.L.T @ diagonal(1.0 / ops.M.diagonal()) @ ops.L
        B, W = canonical(diagonal(1.0 / ops.M.diagonal()) @ ops.L), ops.M
        kind = EnergyKind.LAPLACIAN_ZERO_NEUMANN
    else:
        _require_interior(ops)
        interior = ops.interior
        L_rows = ops.L[interior]
        Q = L_rows.T @ diagonal(1.0 / ops.M.diagonal()[interior]) @ L_rows
        B, W = pointwise_laplacian(ops)
        kind = EnergyKind.LAPLACIAN_NATURAL
    return DiscreteEnergy(symmetrize(Q), ops.M, kind, ops.mesh, B=B, W=W)


def fem_blend_energy(ops: FemOperators, alpha: float) -> DiscreteEnergy:
    """(1−α)·natural Laplacian + α·Hessian on a mesh."""
    return blend_energy(fem_hessian_energy(ops),
                        fem_laplacian_energy(ops, BoundaryCondition.NATURAL), alpha)


# ---------------------------------------------------------------------------
# Crouzeix–Raviart comparison energy


def _edge_outward_normals(mesh: TriMesh, P: np.ndarray) -> np.ndarray:
    """In-plane unit normal of each boundary edge pointing away from its face."""
    edges = mesh.boundary_edges
    a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
    apex = mesh.edge_opposite[edges, 0]
    t = P[b] - P[a]
    v = P[a] - P[apex]
    n = v - (np.einsum("ij,ij->i", v, t) / np.einsum("ij,ij->i", t, t))[:, None] * t
    return n / np.linalg.norm(n, axis=1)[:, None]


def cr_energy(mesh: TriMesh) -> DiscreteEnergy:
    """
    Edge-based energy Eᵀ Kᵀ M_cr⁻¹ K E with K = L_cr + N_cr.

    E averages vertex values onto edge midpoints, L_cr is the negated
    nonconforming stiffness matrix and N_cr adds, on each boundary edge,
    |e| times the outward normal derivative of the face's edge interpolant.
    """
    P = _embedded(mesh)
    _, grads = face_geometry(mesh)
    k = mesh.k
    # edge basis opposite corner c is 1 − 2φ_c
    edge_grads = -2.0 * grads
    fe = mesh.face_edges

    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(fe[:, a])
            cols.append(fe[:, b])
            vals.append(-mesh.face_areas * np.einsum("ij,ij->i", edge_grads[:, a], edge_grads[:, b]))
    L_cr = assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (k, k))

    boundary = mesh.boundary_edges
    faces = mesh.edge_faces[boundary, 0]
    normals = _edge_outward_normals(mesh, P)
    lengths = np.linalg.norm(P[mesh.edges[boundary, 1]] - P[mesh.edges[boundary, 0]], axis=1)
    rows, cols, vals = [], [], []
    for c in range(3):
        rows.append(boundary)
        cols.append(fe[faces, c])
        vals.append(lengths * np.einsum("ij,ij->i", normals, edge_grads[faces, c]))
    N_cr = assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (k, k))

    K = canonical(L_cr + N_cr)
    E = assemble(np.repeat(np.arange(k), 2), mesh.edges.reshape(-1), np.full(2 * k, 0.5), (k, mesh.n))
    M_cr = np.bincount(fe.reshape(-1), weights=np.repeat(mesh.face_areas / 3.0, 3), minlength=k)
    KE = K @ E
    Q = KE.T @ diagonal(1.0 / M_cr) @ KE
    logger.debug("CR energy: %d edges, %d on the boundary", k, boundary.size)
    return DiscreteEnergy(symmetrize(Q), lumped_mass(mesh), EnergyKind.CROUZEIX_RAVIART, mesh,
                          B=canonical(diagonal(1.0 / M_cr) @ KE), W=diagonal(M_cr))

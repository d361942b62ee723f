"""
Finite-difference second-derivative operators on masked grids and on the
1D bending bar, and the quadratic energies assembled from them.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .domain import BarDomain, GridDomain
from .errors import DomainError
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

# (di, dj, weight) taps, scaled by 1/h²
_XX = [(-1, 0, 1.0), (0, 0, -2.0), (1, 0, 1.0)]
_YY = [(0, -1, 1.0), (0, 0, -2.0), (0, 1, 1.0)]
_XY = [(1, 1, 0.25), (-1, -1, 0.25), (1, -1, -0.25), (-1, 1, -0.25)]


def _stencil(domain: GridDomain, nodes: np.ndarray,
             taps: Sequence[Tuple[int, int, float]]) -> sp.csr_matrix:
    """One row per node applying ``taps``; every tapped neighbor must be masked."""
    rows, cols, vals = [], [], []
    row_ids = np.arange(nodes.size)
    scale = 1.0 / domain.h ** 2
    for di, dj, weight in taps:
        target = domain.neighbor(nodes, di, dj)
        if np.any(target < 0):
            raise DomainError(f"stencil offset ({di}, {dj}) leaves the mask")
        rows.append(row_ids)
        cols.append(target)
        vals.append(np.full(nodes.size, weight * scale))
    return assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                    (nodes.size, domain.n))


@dataclass(frozen=True, eq=False)
class FdHessian:
    """
    Stacked Hessian rows [H_xx; H_yy; √2·H_xy] at the interior nodes, with
    the per-row cell weight M̃ = h².
    """

    H: sp.csr_matrix
    Mtilde: sp.csr_matrix
    domain: GridDomain

    def blocks(self) -> Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        """H_xx, H_yy and the unscaled H_xy."""
        ni = self.domain.n_interior
        return (
            self.H[:ni],
            self.H[ni:2 * ni],
            canonical(self.H[2 * ni:] / np.sqrt(2.0)),
        )


def build_fd_hessian(domain: GridDomain) -> FdHessian:
    """
    Second-order central stencils for the three Hessian components.

    Raises:
        DomainError: the grid has no interior node
    """
    if domain.n_interior == 0:
        raise DomainError("grid has no interior nodes")
    nodes = domain.interior
    H = sp.vstack([
        _stencil(domain, nodes, _XX),
        _stencil(domain, nodes, _YY),
        np.sqrt(2.0) * _stencil(domain, nodes, _XY),
    ])
    Mtilde = diagonal(np.full(3 * nodes.size, domain.h ** 2))
    logger.debug("FD Hessian: %d rows over %d nodes", H.shape[0], domain.n)
    return FdHessian(canonical(H), Mtilde, domain)


def fd_hessian_energy(fd: FdHessian) -> DiscreteEnergy:
    Q = symmetrize(fd.H.T @ fd.Mtilde @ fd.H)
    M = diagonal(np.full(fd.domain.n, fd.domain.h ** 2))
    return DiscreteEnergy(Q, M, EnergyKind.HESSIAN_NATURAL, fd.domain, B=fd.H, W=fd.Mtilde)


def _reflected_axis(domain: GridDomain, nodes: np.ndarray, axis: Tuple[int, int]):
    """
    Second difference along one axis with a missing neighbor mirrored onto
    the present one (ghost value equals its opposite). Both missing: no term.
    """
    di, dj = axis
    back = domain.neighbor(nodes, -di, -dj)
    ahead = domain.neighbor(nodes, di, dj)
    has_back, has_ahead = back >= 0, ahead >= 0
    both = has_back & has_ahead
    rows = np.arange(nodes.size)

    r = [rows[both], rows[both], rows[has_back & ~has_ahead], rows[has_ahead & ~has_back]]
    c = [back[both], ahead[both], back[has_back & ~has_ahead], ahead[has_ahead & ~has_back]]
    v = [np.ones(both.sum()), np.ones(both.sum()),
         np.full(r[2].size, 2.0), np.full(r[3].size, 2.0)]
    active = has_back | has_ahead
    r.append(rows[active])
    c.append(nodes[active])
    v.append(np.full(active.sum(), -2.0))
    return np.concatenate(r), np.concatenate(c), np.concatenate(v)


def fd_laplacian(domain: GridDomain, bc: BoundaryCondition) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Five-point Laplacian rows and their cell weights.

    NATURAL gives one row per interior node. ZERO_NEUMANN gives one row per
    masked node, reflecting missing neighbors across the boundary.
    """
    if domain.n_interior == 0:
        raise DomainError("grid has no interior nodes")
    if bc is BoundaryCondition.NATURAL:
        nodes = domain.interior
        L = _stencil(domain, nodes, _XX) + _stencil(domain, nodes, _YY)
    else:
        nodes = np.arange(domain.n)
        parts = [_reflected_axis(domain, nodes, axis) for axis in ((1, 0), (0, 1))]
        rows, cols, vals = (np.concatenate(p) for p in zip(*parts))
        L = assemble(rows, cols, vals / domain.h ** 2, (nodes.size, domain.n))
    return canonical(L), diagonal(np.full(nodes.size, domain.h ** 2))


def build_fd_laplacian_energy(domain: GridDomain, bc: BoundaryCondition) -> DiscreteEnergy:
    L, Mtilde = fd_laplacian(domain, bc)
    kind = (EnergyKind.LAPLACIAN_NATURAL if bc is BoundaryCondition.NATURAL
            else EnergyKind.LAPLACIAN_ZERO_NEUMANN)
    M = diagonal(np.full(domain.n, domain.h ** 2))
    return DiscreteEnergy(symmetrize(L.T @ Mtilde @ L), M, kind, domain, B=L, W=Mtilde)


def blend_energy(hess: DiscreteEnergy, lap: DiscreteEnergy, alpha: float) -> DiscreteEnergy:
    """
    (1−α)·Q_lap + α·Q_hess.

    Raises:
        ValueError: α outside [0, 1], wrong energy kinds or different domains
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if hess.kind is not EnergyKind.HESSIAN_NATURAL or lap.kind is not EnergyKind.LAPLACIAN_NATURAL:
        raise ValueError(f"blend needs a Hessian and a natural Laplacian energy, got {hess.label} and {lap.label}")
    if hess.domain is not lap.domain:
        raise ValueError("blended energies must share one domain")
    Q = symmetrize((1.0 - alpha) * lap.Q + alpha * hess.Q)
    B = W = None
    if hess.factor is not None and lap.factor is not None:
        B = canonical(sp.vstack([lap.B, hess.B]))
        W = canonical(sp.block_diag([(1.0 - alpha) * lap.W, alpha * hess.W]))
    return DiscreteEnergy(Q, hess.M, EnergyKind.BLEND, hess.domain, alpha=float(alpha), B=B, W=W)


def bar_second_difference(domain: BarDomain) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """(1, −2, 1)/h² rows at the interior bar nodes, weighted by h."""
    nodes = domain.interior
    rows = np.repeat(np.arange(nodes.size), 3)
    cols = (nodes[:, None] + np.array([-1, 0, 1])).reshape(-1)
    vals = np.tile([1.0, -2.0, 1.0], nodes.size) / domain.h ** 2
    B = assemble(rows, cols, vals, (nodes.size, domain.n))
    return B, diagonal(np.full(nodes.size, domain.h))


def build_fd_bar_1d(n: int, h: float) -> DiscreteEnergy:
    """Bending-bar energy h·‖Bu‖² on n nodes; its null space is {1, x}."""
    domain = BarDomain(n, h)
    B, Mtilde = bar_second_difference(domain)
    M = diagonal(np.full(n, h))
    return DiscreteEnergy(symmetrize(B.T @ Mtilde @ B), M, EnergyKind.HESSIAN_NATURAL, domain, B=B, W=Mtilde)

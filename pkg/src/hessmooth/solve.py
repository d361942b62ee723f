"""
Application solvers built on the discrete energies: interpolation, data
smoothing, modal analysis, subspace weights, L1 smoothing and flow, and the
annulus convergence experiment.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .domain import (
    BarDomain,
    ConstraintSet,
    GridDomain,
    TriMesh,
    annulus_grid,
    annulus_mesh,
)
from .errors import (
    ConvergenceError,
    DomainError,
    FlowError,
    HessmoothError,
    RankDeficiencyError,
)
from .fd_ops import (
    bar_second_difference,
    build_fd_hessian,
    fd_hessian_energy,
    fd_laplacian,
)
from .fem_ops import (
    build_fem_operators,
    cr_energy,
    fem_hessian_energy,
    pointwise_hessian,
    pointwise_laplacian,
)
from .settings import DEFAULT_SETTINGS
from .sparse import (
    BoundaryCondition,
    DiscreteEnergy,
    EigenPairs,
    EnergyKind,
    SpdFactorization,
    diagonal,
    min_quadratic_eq,
    refined_solve,
    smallest_eigenpairs,
)

logger = logging.getLogger(__name__)

_ADMM = DEFAULT_SETTINGS["admm"]
_TOL = DEFAULT_SETTINGS["tolerances"]
_MAX_REFINEMENT = DEFAULT_SETTINGS["solve"]["max_refinement"]

# energies whose null space is the affine functions of a planar domain
_AFFINE_NULL = (EnergyKind.HESSIAN_NATURAL, EnergyKind.CROUZEIX_RAVIART)


def _affine_rank(positions: np.ndarray) -> int:
    return int(np.linalg.matrix_rank(np.column_stack([np.ones(len(positions)), positions])))


def _check_affine_sites(energy: DiscreteEnergy, indices: np.ndarray, what: str) -> None:
    """Sites must fix the affine null space of planar Hessian-type energies."""
    domain = energy.domain
    planar = domain.dim <= 2
    affine = energy.kind in _AFFINE_NULL or (energy.kind is EnergyKind.BLEND and energy.alpha > 0)
    if not (planar and affine):
        return
    needed = domain.dim + 1
    if _affine_rank(domain.positions[indices]) < needed:
        raise RankDeficiencyError(
            f"{what} do not span the domain affinely "
            f"({len(indices)} sites, {needed} affinely independent ones needed)"
        )


def interpolate(energy: DiscreteEnergy, constraints: ConstraintSet, b=None,
                tol: float = _TOL["solve"], rank_tol: float = _TOL["rank"],
                max_refinement: int = _MAX_REFINEMENT) -> np.ndarray:
    """
    Minimize ½uᵀQu (+ bᵀu) with u fixed at the constrained nodes.

    Raises:
        RankDeficiencyError: the constraint sites leave part of the energy's
            null space free (e.g. collinear sites under the Hessian energy)
    """
    constraints.check_range(energy.n)
    if len(constraints) == 0:
        raise RankDeficiencyError("interpolation needs at least one constraint")
    _check_affine_sites(energy, constraints.indices, "constraint sites")
    return min_quadratic_eq(energy.Q, energy.M, constraints=constraints, b=b,
                            tol=tol, rank_tol=rank_tol, max_refinement=max_refinement)


def smooth(energy: DiscreteEnergy, f, w_smooth: float,
           tol: float = _TOL["solve"], rank_tol: float = _TOL["rank"],
           max_refinement: int = _MAX_REFINEMENT) -> np.ndarray:
    """
    Solve (M + w·Q) u = M f.

    Energies that carry Q = BᵀWB are solved in block form, which stays
    accurate for weights far beyond the conditioning of M + w·Q.
    """
    if not w_smooth > 0:
        raise ValueError(f"smoothness weight must be positive, got {w_smooth}")
    return min_quadratic_eq(energy.Q, energy.M, f=f, w=w_smooth, factor=energy.factor,
                            tol=tol, rank_tol=rank_tol, max_refinement=max_refinement)


def modes(energy: DiscreteEnergy, k: int, **options) -> EigenPairs:
    """Lowest k generalized eigenpairs of the energy against its mass matrix."""
    return smallest_eigenpairs(energy.Q, energy.M, k, **options)


# ---------------------------------------------------------------------------
# Subspace weights


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """One weight field per handle; column i is 1 at handle i and 0 at the others."""

    W: np.ndarray
    handles: np.ndarray
    domain: Any

    @property
    def m(self) -> int:
        return int(self.handles.size)

    def row_sum_residual(self) -> float:
        return float(np.abs(self.W.sum(axis=1) - 1.0).max())

    def blend(self, handle_values: np.ndarray) -> np.ndarray:
        """Σ_i w_i(v)·q_i for per-handle values or positions q."""
        return self.W @ np.asarray(handle_values, dtype=float)

    def reproduction_error(self) -> float:
        """max_v ‖Σ_i w_i(v)·p_i − p_v‖."""
        P = self.domain.positions
        return float(np.linalg.norm(self.blend(P[self.handles]) - P, axis=1).max())


def subspace_weights(energy: DiscreteEnergy, handles: Sequence[int],
                     tol: float = _TOL["solve"], rank_tol: float = _TOL["rank"],
                     max_refinement: int = _MAX_REFINEMENT) -> WeightMatrix:
    """
    Minimize ½wᵢᵀQwᵢ subject to wᵢ(p_j) = δᵢⱼ for every handle.

    The free block of Q is factorized once and shared by all columns.

    Raises:
        RankDeficiencyError: fewer than three handles or a collinear set
        ValueError: repeated or out-of-range handle indices
    """
    handles = np.asarray(handles, dtype=np.int64).reshape(-1)
    n = energy.n
    ConstraintSet(handles, np.zeros(handles.size)).check_range(n)
    needed = min(energy.domain.dim, 2) + 1
    if handles.size < needed:
        raise RankDeficiencyError(f"subspace weights need at least {needed} handles, got {handles.size}")
    _check_affine_sites(energy, handles, "handles")
    if energy.domain.dim > 2 and _affine_rank(energy.domain.positions[handles]) < 3:
        raise RankDeficiencyError("handles are collinear")

    m = handles.size
    W = np.zeros((n, m))
    W[handles, np.arange(m)] = 1.0
    free = np.setdiff1d(np.arange(n), handles)
    if free.size:
        Q_rows = energy.Q[free]
        Q_free = Q_rows[:, free]
        rhs = -(Q_rows[:, handles] @ np.eye(m))
        factorization = SpdFactorization(Q_free, rank_tol=rank_tol)
        W[free] = refined_solve(Q_free, factorization, rhs, tol=tol, max_refinement=max_refinement)
    logger.info("computed %d weight fields over %d nodes", m, n)
    return WeightMatrix(W, handles, energy.domain)


# ---------------------------------------------------------------------------
# L1 smoothing


@dataclass(frozen=True, eq=False)
class L1Problem:
    """
    λ·Σ_k M̃_kk |(Hu)_k| + ½(u−f)ᵀM(u−f), with ADMM parameters.

    ``rho`` defaults to ``lam``.
    """

    H: sp.csr_matrix
    Mtilde: sp.csr_matrix
    M: sp.csr_matrix
    f: np.ndarray
    lam: float
    rho: Optional[float] = None
    rel_tol: float = _ADMM["rel_tol"]
    abs_tol: float = _ADMM["abs_tol"]
    max_iterations: int = _ADMM["max_iterations"]
    auto_rho: bool = _ADMM["auto_rho"]
    rho_period: int = _ADMM["rho_period"]
    rho_mu: float = _ADMM["rho_mu"]
    rho_tau: float = _ADMM["rho_tau"]

    def __post_init__(self):
        f = np.array(self.f, dtype=float).reshape(-1)
        object.__setattr__(self, "f", f)
        if self.rho is None:
            object.__setattr__(self, "rho", float(self.lam))
        if not self.lam > 0 or not self.rho > 0:
            raise ValueError(f"lambda and rho must be positive, got {self.lam} and {self.rho}")
        p, n = self.H.shape
        if self.M.shape != (n, n) or f.size != n or self.Mtilde.shape != (p, p):
            raise ValueError(
                f"inconsistent L1 problem: H {self.H.shape}, M {self.M.shape}, "
                f"Mtilde {self.Mtilde.shape}, f ({f.size},)"
            )

    def objective(self, u: np.ndarray) -> float:
        r = u - self.f
        return float(self.lam * (self.Mtilde.diagonal() @ np.abs(self.H @ u)) + 0.5 * r @ (self.M @ r))


@dataclass(frozen=True, eq=False)
class L1Result:
    u: np.ndarray
    z: np.ndarray
    y: np.ndarray
    rho: float
    iterations: int
    objective: List[float] = field(default_factory=list)
    primal_residuals: List[float] = field(default_factory=list)
    dual_residuals: List[float] = field(default_factory=list)

    def certificate(self, lam: float) -> np.ndarray:
        """Rescaled dual (ρ/λ)·y, a subgradient of |·| at z."""
        return (self.rho / lam) * self.y


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def l1_smooth(problem: L1Problem, tol: float = _TOL["solve"],
              max_refinement: int = _MAX_REFINEMENT) -> L1Result:
    """
    Scaled-form ADMM on the split Hu = z.

    u-step: (M + ρHᵀM̃H) u = Mf + ρHᵀM̃(z − y); z-step: soft threshold at λ/ρ;
    y += Hu − z. Stops when the M̃-weighted primal residual ‖Hu − z‖ is
    within ``rel_tol`` of max(‖Hu‖, ‖z‖) and the dual residual
    ρ‖HᵀM̃(z − z_prev)‖ is within ``rel_tol`` of the larger term of the
    u-step gradient, max(ρ‖HᵀM̃y‖, ‖Mu‖). Both bounds also carry an
    absolute floor of ``abs_tol`` per entry. With ``auto_rho`` the penalty
    is rebalanced every ``rho_period`` iterations and the system
    refactorized. ``tol`` and ``max_refinement`` control the u-step solves.

    Raises:
        ConvergenceError: iteration cap reached, with the residual history
    """
    H, M, f = problem.H, problem.M, problem.f
    weights = problem.Mtilde.diagonal()
    sqrt_w = np.sqrt(weights)
    HtW = (H.T @ problem.Mtilde).tocsr()
    HtWH = (HtW @ H).tocsr()
    Mf = M @ f
    p, n = H.shape
    rho = float(problem.rho)

    def factor(rho_value: float) -> Tuple[sp.csr_matrix, SpdFactorization]:
        K = (M + rho_value * HtWH).tocsr()
        return K, SpdFactorization(K, check_rank=False)

    K, factorization = factor(rho)
    u = f.copy()
    z = H @ u
    y = np.zeros(p)
    objective, primal, dual = [], [], []

    for iteration in range(1, problem.max_iterations + 1):
        u = refined_solve(K, factorization, Mf + rho * (HtW @ (z - y)),
                          tol=tol, max_refinement=max_refinement)
        Hu = H @ u
        z_prev = z
        z = _soft_threshold(Hu + y, problem.lam / rho)
        y = y + Hu - z

        r = float(np.linalg.norm(sqrt_w * (Hu - z)))
        s = float(rho * np.linalg.norm(HtW @ (z - z_prev)))
        objective.append(problem.objective(u))
        primal.append(r)
        dual.append(s)

        eps_primal = np.sqrt(p) * problem.abs_tol + problem.rel_tol * max(
            np.linalg.norm(sqrt_w * Hu), np.linalg.norm(sqrt_w * z))
        eps_dual = np.sqrt(n) * problem.abs_tol + problem.rel_tol * max(
            rho * np.linalg.norm(HtW @ y), np.linalg.norm(M @ u))
        if r <= eps_primal and s <= eps_dual:
            logger.debug("ADMM converged in %d iterations (rho=%.3e)", iteration, rho)
            return L1Result(u, z, y, rho, iteration, objective, primal, dual)

        if problem.auto_rho and iteration % problem.rho_period == 0:
            scale = 1.0
            if r > problem.rho_mu * s:
                scale = problem.rho_tau
            elif s > problem.rho_mu * r:
                scale = 1.0 / problem.rho_tau
            if scale != 1.0:
                rho *= scale
                y = y / scale
                K, factorization = factor(rho)

    raise ConvergenceError(
        f"ADMM did not converge in {problem.max_iterations} iterations "
        f"(primal {primal[-1]:.3e}, dual {dual[-1]:.3e})",
        list(zip(primal, dual)),
    )


def _admm_options(settings: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    section = dict(_ADMM)
    if settings is not None:
        section.update(settings.get("admm", {}))
    return section


def _solve_options(settings: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """u-step solve tolerance and refinement budget from settings."""
    if settings is None:
        return {"tol": _TOL["solve"], "max_refinement": _MAX_REFINEMENT}
    return {
        "tol": settings.get("tolerances", {}).get("solve", _TOL["solve"]),
        "max_refinement": settings.get("solve", {}).get("max_refinement", _MAX_REFINEMENT),
    }


def l1_operator(domain, kind: str = "hessian") -> Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """
    Second-derivative rows, their weights and the node mass for a domain.

    ``kind`` is "hessian" or "laplacian"; the bar only has its second difference.
    """
    if kind not in ("hessian", "laplacian"):
        raise ValueError(f"Unknown L1 operator kind: {kind}")
    if isinstance(domain, BarDomain):
        B, Mtilde = bar_second_difference(domain)
        return B, Mtilde, diagonal(np.full(domain.n, domain.h))
    if isinstance(domain, GridDomain):
        M = diagonal(np.full(domain.n, domain.h ** 2))
        if kind == "hessian":
            fd = build_fd_hessian(domain)
            return fd.H, fd.Mtilde, M
        L, Mtilde = fd_laplacian(domain, BoundaryCondition.NATURAL)
        return L, Mtilde, M
    ops = build_fem_operators(domain)
    H, Mtilde = pointwise_hessian(ops) if kind == "hessian" else pointwise_laplacian(ops)
    return H, Mtilde, ops.M


def l1_problem_from(domain, f, lam: float, kind: str = "hessian",
                    settings: Optional[Dict[str, Any]] = None, **overrides) -> L1Problem:
    """L1 problem on a grid, bar or mesh with ADMM options from settings."""
    H, Mtilde, M = l1_operator(domain, kind)
    options = _admm_options(settings)
    options.update(overrides)
    return L1Problem(H, Mtilde, M, f, lam, **options)


def l1_energy_density(domain, values: np.ndarray, kind: str = "hessian") -> np.ndarray:
    """
    Per-node L1 density Σ|second derivatives| of one or more fields.

    ``values`` is (n,) or (n, c); columns are summed. Nodes without an
    operator row get zero.
    """
    H, _, _ = l1_operator(domain, kind)
    values = np.asarray(values, dtype=float).reshape(H.shape[1], -1)
    rows = np.abs(H @ values).sum(axis=1)
    if isinstance(domain, TriMesh):
        nodes = domain.interior_vertices
    else:
        nodes = domain.interior
    density = np.zeros(H.shape[1])
    np.add.at(density, np.tile(nodes, rows.size // nodes.size), rows)
    return density


def angle_defects(mesh: TriMesh) -> np.ndarray:
    """2π (interior) or π (boundary) minus the incident corner angles."""
    P = mesh.positions
    if mesh.dim == 2:
        P = np.column_stack([P, np.zeros(mesh.n)])
    T = mesh.triangles
    angles = np.empty(T.shape, dtype=float)
    for c in range(3):
        e1 = P[T[:, (c + 1) % 3]] - P[T[:, c]]
        e2 = P[T[:, (c + 2) % 3]] - P[T[:, c]]
        sine = np.linalg.norm(np.cross(e1, e2), axis=1)
        angles[:, c] = np.arctan2(sine, np.einsum("ij,ij->i", e1, e2))
    total = np.bincount(T.reshape(-1), weights=angles.reshape(-1), minlength=mesh.n)
    full = np.full(mesh.n, 2.0 * np.pi)
    full[mesh.boundary_vertices] = np.pi
    return full - total


def total_absolute_defect(mesh: TriMesh, exclude: Sequence[int] = ()) -> float:
    """Σ|angle defect| over the vertices not in ``exclude`` (e.g. crease corners)."""
    keep = np.ones(mesh.n, dtype=bool)
    keep[np.asarray(exclude, dtype=np.int64)] = False
    return float(np.abs(angle_defects(mesh)[keep]).sum())


def l1_flow(mesh: TriMesh, lam: float, steps: int, operator_kind: str = "hessian",
            settings: Optional[Dict[str, Any]] = None, **overrides) -> List[TriMesh]:
    """
    Repeated L1 smoothing of the vertex coordinates.

    Each step rebuilds the operators from the current geometry and smooths
    every coordinate function independently. Returns the input mesh followed
    by the mesh after each step.

    Raises:
        FlowError: a step produced degenerate faces or a solver failed
    """
    if mesh.dim != 3:
        raise DomainError(f"flow needs a mesh in 3D, got dimension {mesh.dim}")
    if steps < 1:
        raise ValueError(f"flow needs at least one step, got {steps}")
    options = _admm_options(settings)
    options.update(overrides)
    solve_options = _solve_options(settings)
    sequence = [mesh]
    current = mesh
    for step in range(1, steps + 1):
        try:
            H, Mtilde, M = l1_operator(current, operator_kind)
            positions = np.column_stack([
                l1_smooth(L1Problem(H, Mtilde, M, current.positions[:, a], lam, **options), **solve_options).u
                for a in range(3)
            ])
            current = current.with_positions(positions)
        except HessmoothError as e:
            raise FlowError(step, e)
        logger.info("flow step %d/%d done", step, steps)
        sequence.append(current)
    return sequence


# ---------------------------------------------------------------------------
# Annulus experiment


class RadialProfile(NamedTuple):
    """u(r) = a + b·r² + c·ln r + d·r²·ln r."""

    a: float
    b: float
    c: float
    d: float

    def value(self, r):
        r = np.asarray(r, dtype=float)
        log_r = np.log(r)
        return self.a + self.b * r ** 2 + self.c * log_r + self.d * r ** 2 * log_r

    def second_derivative(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self.b - self.c / r ** 2 + self.d * (2.0 * np.log(r) + 3.0)

    def at(self, positions: np.ndarray) -> np.ndarray:
        return self.value(np.linalg.norm(np.asarray(positions)[:, :2], axis=1))


def annulus_reference(r0: float, r1: float) -> RadialProfile:
    """
    Radial biharmonic with u(r0) = 1, u(r1) = 0 and u''(r0) = u''(r1) = 0.

    Raises:
        ValueError: r0 and r1 do not satisfy 0 < r0 < r1
    """
    if not 0 < r0 < r1:
        raise ValueError(f"annulus needs 0 < r0 < r1, got r0={r0}, r1={r1}")

    def value_row(r):
        return [1.0, r ** 2, np.log(r), r ** 2 * np.log(r)]

    def curvature_row(r):
        return [0.0, 2.0, -1.0 / r ** 2, 2.0 * np.log(r) + 3.0]

    system = np.array([value_row(r0), value_row(r1), curvature_row(r0), curvature_row(r1)])
    try:
        coefficients = np.linalg.solve(system, [1.0, 0.0, 0.0, 0.0])
    except np.linalg.LinAlgError as e:
        raise ValueError(f"annulus reference system is singular: {e}")
    return RadialProfile(*(float(c) for c in coefficients))


class ConvergenceRow(NamedTuple):
    h: float
    error: float
    rate: Optional[float]


def _annulus_fd_error(reference: RadialProfile, r0: float, r1: float, n: int,
                      **solve_options) -> Tuple[float, float]:
    """Hessian interpolation with the boundary band fixed to the reference values."""
    grid = annulus_grid(r0, r1, n)
    energy = fd_hessian_energy(build_fd_hessian(grid))
    exact = reference.at(grid.positions)
    band = np.setdiff1d(np.arange(grid.n), grid.interior)
    u = interpolate(energy, ConstraintSet(band, exact[band]), **solve_options)
    return grid.h, float(np.abs(u - exact)[grid.interior].max())


def _annulus_mesh_error(reference: RadialProfile, r0: float, r1: float,
                        nr: int, ntheta: int, method: str, **solve_options) -> Tuple[float, float]:
    """Inner ring fixed to 1 and outer ring to 0 on a structured annulus."""
    mesh = annulus_mesh(r0, r1, nr, ntheta)
    energy = cr_energy(mesh) if method == "cr" else fem_hessian_energy(build_fem_operators(mesh))
    inner = np.arange(ntheta)
    outer = np.arange(nr * ntheta, (nr + 1) * ntheta)
    constraints = ConstraintSet(np.concatenate([inner, outer]),
                                np.concatenate([np.ones(ntheta), np.zeros(ntheta)]))
    u = interpolate(energy, constraints, **solve_options)
    error = np.abs(u - reference.at(mesh.positions))
    return (r1 - r0) / nr, float(error.max())


def convergence_study(method: str = "fd", levels: int = 3, r0: float = 0.5,
                      r1: float = 1.0, **solve_options) -> List[ConvergenceRow]:
    """
    L∞ error against the analytic radial profile over dyadic refinements.

    ``method`` is "fd" (masked grid of 16·2^l + 1 nodes per side), "fem"
    or "cr" (annulus mesh with 4·2^l rings of 32·2^l vertices). Extra
    keywords (``tol``, ``rank_tol``, ``max_refinement``) go to :func:`interpolate`.
    """
    if method not in ("fd", "fem", "cr"):
        raise ValueError(f"Unknown discretization: {method}")
    if levels < 1:
        raise ValueError(f"need at least one level, got {levels}")
    reference = annulus_reference(r0, r1)
    rows: List[ConvergenceRow] = []
    for level in range(levels):
        scale = 2 ** level
        if method == "fd":
            h, error = _annulus_fd_error(reference, r0, r1, 16 * scale + 1, **solve_options)
        else:
            h, error = _annulus_mesh_error(reference, r0, r1, 4 * scale, 32 * scale, method, **solve_options)
        rate = None
        if rows:
            rate = float(np.log(rows[-1].error / error) / np.log(rows[-1].h / h))
        logger.info("annulus %s level %d: h=%.4g error=%.4e", method, level, h, error)
        rows.append(ConvergenceRow(h, error, rate))
    return rows

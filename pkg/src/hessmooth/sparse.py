"""
Sparse matrices, SPD factorizations, equality-constrained quadratic
minimization and a smallest-generalized-eigenpair solver.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted,
duplicate-free indices).
"""

import enum
import io
import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu

from .domain import ConstraintSet
from .errors import ConvergenceError, NotPositiveDefiniteError, RankDeficiencyError
from .settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)

_TOL = DEFAULT_SETTINGS["tolerances"]
_SOLVE = DEFAULT_SETTINGS["solve"]
_EIGEN = DEFAULT_SETTINGS["eigen"]


# ---------------------------------------------------------------------------
# Assembly


def assemble(rows, cols, vals, shape) -> sp.csr_matrix:
    """Sum triplets into a canonical CSR matrix."""
    A = sp.coo_matrix(
        (np.asarray(vals, dtype=float).reshape(-1),
         (np.asarray(rows).reshape(-1), np.asarray(cols).reshape(-1))),
        shape=shape,
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def canonical(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def diagonal(values) -> sp.csr_matrix:
    return canonical(sp.diags(np.asarray(values, dtype=float).reshape(-1)))


def symmetrize(A) -> sp.csr_matrix:
    """½(A + Aᵀ); bitwise symmetric because floating-point addition commutes."""
    A = sp.csr_matrix(A)
    return canonical((A + A.T) * 0.5)


def is_symmetric(A) -> bool:
    A = sp.csr_matrix(A)
    return (A != A.T).nnz == 0


def inf_norm(A) -> float:
    """Maximum absolute row sum."""
    A = sp.csr_matrix(A)
    if A.nnz == 0:
        return 0.0
    return float(abs(A).sum(axis=1).max())


def psd_margin(Q, samples: int = 100, seed: int = 0) -> float:
    """Smallest xᵀQx / (‖Q‖∞‖x‖²) over seeded random x; ≥ -tol for a PSD form."""
    Q = sp.csr_matrix(Q)
    scale = inf_norm(Q) or 1.0
    X = np.random.default_rng(seed).standard_normal((Q.shape[0], samples))
    values = np.einsum("ij,ij->j", X, Q @ X) / (scale * np.einsum("ij,ij->j", X, X))
    return float(values.min())


def spmv(A, x) -> np.ndarray:
    """y = A x."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: matrix is {A.shape}, vector has {x.shape[0]} entries")
    return A @ x


def export_matrix_market(A) -> str:
    """MatrixMarket coordinate text with round-trip precision."""
    buffer = io.BytesIO()
    scipy.io.mmwrite(buffer, sp.coo_matrix(A), precision=17)
    return buffer.getvalue().decode("ascii")


# ---------------------------------------------------------------------------
# Energies


class EnergyKind(enum.Enum):
    HESSIAN_NATURAL = "hessian"
    LAPLACIAN_ZERO_NEUMANN = "laplacian-neumann"
    LAPLACIAN_NATURAL = "laplacian-natural"
    CROUZEIX_RAVIART = "cr"
    BLEND = "blend"


class BoundaryCondition(enum.Enum):
    ZERO_NEUMANN = "zero-neumann"
    NATURAL = "natural"


@dataclass(frozen=True, eq=False)
class DiscreteEnergy:
    """
    Quadratic form uᵀQu with its mass matrix M on a domain.

    ``B`` and ``W`` hold the pointwise operator and its diagonal row mass
    when the builder knows them, with Q = BᵀWB. Solvers with a data term use
    them to avoid forming M + w·Q when w is large.
    """

    Q: sp.csr_matrix
    M: sp.csr_matrix
    kind: EnergyKind
    domain: Any
    alpha: Optional[float] = None
    B: Optional[sp.csr_matrix] = None
    W: Optional[sp.csr_matrix] = None

    @property
    def n(self) -> int:
        return int(self.Q.shape[0])

    @property
    def factor(self):
        """(B, W) with Q = BᵀWB, or None."""
        if self.B is None or self.W is None:
            return None
        return self.B, self.W

    @property
    def label(self) -> str:
        if self.kind is EnergyKind.BLEND:
            return f"blend({self.alpha:g})"
        return self.kind.value

    def quadratic_form(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ (self.Q @ u))

    def gradient(self, u) -> np.ndarray:
        """Gradient of ½uᵀQu."""
        return self.Q @ np.asarray(u, dtype=float)


@dataclass(frozen=True, eq=False)
class EigenPairs:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray

    def __len__(self) -> int:
        return int(self.eigenvalues.size)


# ---------------------------------------------------------------------------
# Factorization and solves


class SpdFactorization:
    """
    Sparse LDLᵀ-style factorization of a symmetric matrix.

    SuperLU runs in symmetric mode with diagonal pivoting, so the diagonal of
    U holds the symmetric pivots. A pivot below ``-rank_tol·max|diag|`` means
    the matrix is indefinite; one within ``rank_tol·max|diag|`` of zero means
    it is singular. Pass ``check_rank=False`` for matrices known to be
    positive definite, where small pivots are scale rather than rank.
    """

    def __init__(self, A, rank_tol: float = _TOL["rank"], check_rank: bool = True):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        scale = float(np.abs(A.diagonal()).max()) if A.shape[0] else 0.0
        if scale == 0.0:
            raise RankDeficiencyError("matrix has an all-zero diagonal")
        try:
            self._lu = splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as e:
            raise RankDeficiencyError(f"factorization failed: {e}")

        pivots = self._lu.U.diagonal()
        order = self._lu.perm_c
        negative = np.flatnonzero(pivots < -rank_tol * scale)
        if negative.size:
            k = negative[0]
            raise NotPositiveDefiniteError(int(order[k]), float(pivots[k]))
        vanishing = np.flatnonzero(np.abs(pivots) <= (rank_tol * scale if check_rank else 0.0))
        if vanishing.size:
            raise RankDeficiencyError("matrix is singular", int(order[vanishing[0]]))
        logger.debug("factorized %dx%d, nnz(L+U)=%d, min pivot %.3e",
                     A.shape[0], A.shape[1], self._lu.L.nnz + self._lu.U.nnz,
                     float(pivots.min()) / scale)

    def solve(self, b) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


def refined_solve(A, factorization: SpdFactorization, b, tol: float = _TOL["solve"],
                  max_refinement: int = _SOLVE["max_refinement"]) -> np.ndarray:
    """
    Solve A x = b with a factorization of A (or of a nearby matrix) plus
    iterative refinement until ‖Ax − b‖ ≤ tol·(‖A‖∞‖x‖ + ‖b‖) per column.
    """
    b = np.asarray(b, dtype=float)
    norm_a = inf_norm(A)
    x = factorization.solve(b)
    history = []
    for _ in range(max_refinement + 1):
        r = b - A @ x
        res = np.linalg.norm(r, axis=0)
        bound = tol * (norm_a * np.linalg.norm(x, axis=0) + np.linalg.norm(b, axis=0))
        history.append(float(np.max(res)))
        if np.all(res <= bound):
            return x
        x = x + factorization.solve(r)
    raise ConvergenceError(
        f"linear solve did not reach relative residual {tol:g} after {max_refinement} refinements",
        history,
    )


def solve_spd(A, b, regularization: float = 0.0, tol: float = _TOL["solve"],
              rank_tol: float = _TOL["rank"],
              max_refinement: int = _SOLVE["max_refinement"],
              check_rank: bool = True) -> np.ndarray:
    """
    Solve A x = b for symmetric A, factorizing A + regularization·diag(A).

    With a nonzero regularization the factorization drives iterative
    refinement against the unregularized A.
    """
    A = sp.csr_matrix(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or b.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: matrix is {A.shape}, right-hand side has {b.shape[0]} rows")
    K = A + regularization * diagonal(A.diagonal()) if regularization else A
    factorization = SpdFactorization(K, rank_tol=rank_tol, check_rank=check_rank)
    return refined_solve(A, factorization, b, tol=tol, max_refinement=max_refinement)


def solve_quasi_definite(M, B, weights, rhs_u, rhs_p, tol: float = _TOL["solve"],
                         max_refinement: int = _SOLVE["max_refinement"]) -> np.ndarray:
    """
    Solve [[M, Bᵀ], [B, −diag(1/weights)]]·[u; p] = [rhs_u; rhs_p] and return u.

    Eliminating p gives (M + Bᵀ·diag(weights)·B)u = rhs_u + Bᵀ·diag(weights)·rhs_p,
    but the block system keeps M and B at their own scale however large the
    weights are. M must be positive definite and the weights positive.
    """
    M = sp.csr_matrix(M, dtype=float)
    B = sp.csr_matrix(B, dtype=float)
    n = M.shape[0]
    K = sp.bmat([[M, B.T], [B, diagonal(-1.0 / np.asarray(weights, dtype=float))]], format="csc")
    try:
        lu = splu(K)
    except RuntimeError as e:
        raise RankDeficiencyError(f"block factorization failed: {e}")
    rhs = np.concatenate([np.asarray(rhs_u, dtype=float), np.asarray(rhs_p, dtype=float)])
    return refined_solve(K, lu, rhs, tol=tol, max_refinement=max_refinement)[:n]


def min_quadratic_eq(Q, M, f=None, w: float = 1.0,
                     constraints: ConstraintSet = None, b=None,
                     factor=None,
                     tol: float = _TOL["solve"], rank_tol: float = _TOL["rank"],
                     max_refinement: int = _SOLVE["max_refinement"]) -> np.ndarray:
    """
    Minimize ½·w·uᵀQu + bᵀu [+ ½(u−f)ᵀM(u−f)] subject to u[idx] = val.

    Constrained variables are eliminated. Without a data term the reduced
    system is solved with :func:`solve_spd` and vanishing pivots mean the
    constraints leave part of the null space of Q unfixed. With a data term
    the system is positive definite; if ``factor = (B, W)`` with Q = BᵀWB is
    given it is solved in block form with :func:`solve_quasi_definite`.

    Raises:
        RankDeficiencyError: the constraints leave part of the null space
            of Q unfixed
        ValueError: bad shapes, w ≤ 0 with data, constraint index out of range
    """
    Q = sp.csr_matrix(Q, dtype=float)
    n = Q.shape[0]
    constraints = constraints if constraints is not None else ConstraintSet.empty()
    constraints.check_range(n)
    if M is not None and M.shape != Q.shape:
        raise ValueError(f"mass matrix shape {M.shape} does not match {Q.shape}")
    if f is None and len(constraints) == 0:
        raise RankDeficiencyError("no constraints and no data term: the null space of Q is unfixed")

    rhs = np.zeros(n)
    if f is not None:
        f = np.asarray(f, dtype=float)
        if f.shape != (n,):
            raise ValueError(f"data vector has shape {f.shape}, expected ({n},)")
        if not w > 0:
            raise ValueError(f"smoothness weight must be positive, got {w}")
        rhs += M @ f
    if b is not None:
        rhs -= np.asarray(b, dtype=float)

    fixed = constraints.indices
    free = np.setdiff1d(np.arange(n), fixed)
    u = np.zeros(n)
    u[fixed] = constraints.values
    if free.size == 0:
        return u

    if f is not None and factor is not None:
        B, W = (sp.csr_matrix(X, dtype=float) for X in factor)
        weights = W.diagonal()
        rows = np.flatnonzero(weights > 0)
        B = B[rows]
        M = sp.csr_matrix(M, dtype=float)
        M_rows = M[free]
        u[free] = solve_quasi_definite(
            M_rows[:, free], B[:, free], w * weights[rows],
            rhs[free] - M_rows[:, fixed] @ constraints.values,
            -(B[:, fixed] @ constraints.values),
            tol=tol, max_refinement=max_refinement,
        )
        return u

    K = w * Q + M if f is not None else w * Q
    K_rows = K[free]
    K_free = K_rows[:, free]
    rhs_free = rhs[free] - K_rows[:, fixed] @ constraints.values
    try:
        u[free] = solve_spd(K_free, rhs_free, tol=tol, rank_tol=rank_tol,
                            max_refinement=max_refinement, check_rank=f is None)
    except RankDeficiencyError as e:
        index = int(free[e.pivot_index]) if e.pivot_index is not None else None
        raise RankDeficiencyError(
            f"{len(constraints)} constraints leave the system rank deficient; "
            "the energy's null space is not fixed",
            index,
        )
    return u



# ---------------------------------------------------------------------------
# Eigenpairs


def _m_orthonormalize(V: np.ndarray, M) -> np.ndarray:
    G = V.T @ (M @ V)
    C = np.linalg.cholesky(0.5 * (G + G.T))
    return scipy.linalg.solve_triangular(C, V.T, lower=True).T


def smallest_eigenpairs(Q, M, k: int, tol: float = _TOL["eig"],
                        dense_limit: int = _EIGEN["dense_limit"],
                        max_iterations: int = _EIGEN["max_iterations"],
                        seed: int = _EIGEN["seed"],
                        shift: float = _SOLVE["shift"]) -> EigenPairs:
    """
    k smallest generalized eigenpairs of Q x = λ M x.

    Small problems use a dense symmetric-definite solver; larger ones use
    shift-invert Lanczos around -σ with σ = shift·mean(diag(Q)). Vectors are
    M-orthonormalized, Rayleigh–Ritz rotated and sign-normalized so their
    largest-magnitude entry is positive.
    """
    Q = sp.csr_matrix(Q, dtype=float)
    M = sp.csr_matrix(M, dtype=float)
    n = Q.shape[0]
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    if M.shape != Q.shape or np.any(M.diagonal() <= 0):
        raise ValueError("mass matrix must be a positive diagonal of matching shape")

    if n <= dense_limit:
        logger.debug("dense generalized eigensolve, n=%d, k=%d", n, k)
        _, V = scipy.linalg.eigh(Q.toarray(), M.toarray(), subset_by_index=[0, k - 1])
    else:
        sigma = shift * float(Q.diagonal().mean())
        if sigma <= 0:
            sigma = shift * float(M.diagonal().mean())
        logger.debug("shift-invert Lanczos, n=%d, k=%d, sigma=-%.3e", n, k, sigma)
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            _, V = eigsh(Q, k=k, M=M, sigma=-sigma, which="LM", v0=v0, maxiter=max_iterations)
        except ArpackNoConvergence as e:
            raise ConvergenceError(
                f"eigensolver did not converge in {max_iterations} iterations "
                f"({len(e.eigenvalues)} of {k} pairs found)",
                list(e.eigenvalues),
            )

    V = _m_orthonormalize(V, M)
    T = V.T @ (Q @ V)
    values, Y = np.linalg.eigh(0.5 * (T + T.T))
    V = V @ Y
    peaks = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[peaks, np.arange(k)])

    residuals = np.linalg.norm(Q @ V - (M @ V) * values, axis=0)
    scale = inf_norm(Q) or inf_norm(M)
    gram_error = np.abs(V.T @ (M @ V) - np.eye(k)).max()
    if np.any(residuals > tol * scale) or gram_error > tol:
        raise ConvergenceError(
            f"eigenpairs missed tolerance {tol:g}: max residual {residuals.max():.3e}, "
            f"M-orthonormality error {gram_error:.3e}",
            residuals.tolist(),
        )
    return EigenPairs(values, V, residuals)

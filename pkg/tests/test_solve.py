"""
Tests for the quadratic solvers in the solve module: interpolation,
smoothing, modes, subspace weights and the annulus experiment.
"""

import pytest
import numpy as np
import scipy.linalg
import os
import sys

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from hessmooth.domain import (
    ConstraintSet,
    disk_mesh,
    icosphere,
    rectangle_grid,
    square_mesh,
)
from hessmooth.errors import ConvergenceError, RankDeficiencyError
from hessmooth.fd_ops import build_fd_hessian, build_fd_laplacian_energy, fd_hessian_energy
from hessmooth.fem_ops import build_fem_operators, fem_hessian_energy, fem_laplacian_energy
from hessmooth.solve import (
    annulus_reference,
    convergence_study,
    interpolate,
    modes,
    smooth,
    subspace_weights,
)
from hessmooth.sparse import BoundaryCondition


def grid_hessian(grid):
    return fd_hessian_energy(build_fd_hessian(grid))


def mesh_hessian(mesh):
    return fem_hessian_energy(build_fem_operators(mesh))


def affine_fit(positions, mass, f):
    """M-weighted least-squares affine fit evaluated at the nodes."""
    X = np.column_stack([np.ones(len(positions)), positions])
    w = np.sqrt(mass)
    coef, *_ = np.linalg.lstsq(X * w[:, None], f * w, rcond=None)
    return X @ coef


def outer_rings(grid, rings=2):
    i, j = grid.grid_ij.T
    depth = np.minimum.reduce([i, j, grid.nx - 1 - i, grid.ny - 1 - j])
    return np.flatnonzero(depth < rings)


def smooth_target(positions):
    x, y = positions[:, 0], positions[:, 1]
    return np.exp(x) * np.cos(2.0 * y) + x ** 2 * y


class TestInterpolate:
    def test_affine_data_reproduced_on_mesh(self):
        mesh = disk_mesh(1.0, 4, 12)
        x, y = mesh.positions.T
        g = 1.0 + 0.5 * x - 2.0 * y
        sites = np.array([0, 37, 41, 45])
        u = interpolate(mesh_hessian(mesh), ConstraintSet(sites, g[sites]))
        assert np.abs(u - g).max() <= 1e-8

    def test_constraints_are_exact(self):
        grid = rectangle_grid(7, 7, 0.5)
        sites = np.array([0, 10, 30, 48])
        values = np.array([1.0, -2.0, 0.5, 3.0])
        u = interpolate(grid_hessian(grid), ConstraintSet(sites, values))
        assert np.array_equal(u[sites], values)

    def test_collinear_sites(self):
        grid = rectangle_grid(7, 7, 0.5)
        with pytest.raises(RankDeficiencyError):
            interpolate(grid_hessian(grid), ConstraintSet([0, 8, 16, 24], [0.0, 1.0, 2.0, 3.0]))

    def test_empty_constraints(self):
        with pytest.raises(RankDeficiencyError):
            interpolate(grid_hessian(rectangle_grid(5, 5, 1.0)), ConstraintSet.empty())

    def test_laplacian_accepts_single_site_with_neumann(self):
        grid = rectangle_grid(5, 5, 1.0)
        energy = build_fd_laplacian_energy(grid, BoundaryCondition.ZERO_NEUMANN)
        u = interpolate(energy, ConstraintSet([12], [2.5]))
        assert np.allclose(u, 2.5)


class TestSmooth:
    @pytest.fixture(params=["grid", "mesh"])
    def hessian_energy(self, request):
        if request.param == "grid":
            return grid_hessian(rectangle_grid(6, 6, 1.0))
        return mesh_hessian(disk_mesh(5.0, 4, 12))

    def test_affine_data_unchanged(self, hessian_energy):
        x, y = hessian_energy.domain.positions.T
        f = 2.0 - x + 0.25 * y
        u = smooth(hessian_energy, f, 10.0)
        assert np.abs(u - f).max() <= 1e-8 * np.abs(f).max()

    def test_large_weight_gives_affine_fit(self, hessian_energy):
        domain = hessian_energy.domain
        f = np.random.default_rng(6).standard_normal(hessian_energy.n)
        u = smooth(hessian_energy, f, 1e8)
        fit = affine_fit(domain.positions, hessian_energy.M.diagonal(), f)
        assert np.abs(u - fit).max() <= 1e-4 * np.abs(fit).max()

    @pytest.mark.parametrize("domain", ["fine_grid", "unit_disk"])
    def test_large_weight_on_fine_domains(self, domain):
        if domain == "fine_grid":
            energy = grid_hessian(rectangle_grid(21, 21, 0.05))
        else:
            energy = mesh_hessian(disk_mesh(1.0, 4, 12))
        f = np.random.default_rng(9).standard_normal(energy.n)
        u = smooth(energy, f, 1e8)
        fit = affine_fit(energy.domain.positions, energy.M.diagonal(), f)
        assert np.abs(u - fit).max() <= 1e-4 * np.abs(fit).max()

    def test_large_weight_neumann_on_unit_disk(self):
        ops = build_fem_operators(disk_mesh(1.0, 4, 12))
        energy = fem_laplacian_energy(ops, BoundaryCondition.ZERO_NEUMANN)
        f = 1.0 + 0.3 * np.random.default_rng(10).standard_normal(energy.n)
        mass = energy.M.diagonal()
        mean = (mass @ f) / mass.sum()
        u = smooth(energy, f, 1e8)
        assert np.abs(u - mean).max() <= 1e-6 * np.abs(f).max()

    def test_block_solve_matches_direct_solve(self, hessian_energy):
        f = np.random.default_rng(11).standard_normal(hessian_energy.n)
        u = smooth(hessian_energy, f, 0.5)
        direct = scipy.linalg.solve((hessian_energy.M + 0.5 * hessian_energy.Q).toarray(),
                                    hessian_energy.M @ f, assume_a='pos')
        assert np.allclose(u, direct, atol=1e-9)

    def test_large_weight_neumann_gives_mean(self):
        grid = rectangle_grid(6, 6, 1.0)
        energy = build_fd_laplacian_energy(grid, BoundaryCondition.ZERO_NEUMANN)
        f = 1.0 + 0.3 * np.random.default_rng(7).standard_normal(grid.n)
        mass = energy.M.diagonal()
        mean = (mass @ f) / mass.sum()
        u = smooth(energy, f, 1e8)
        assert np.abs(u - mean).max() <= 1e-6 * np.abs(f).max()

    def test_superposition(self, hessian_energy):
        rng = np.random.default_rng(8)
        f1 = rng.standard_normal(hessian_energy.n)
        f2 = rng.standard_normal(hessian_energy.n)
        combined = smooth(hessian_energy, 2.0 * f1 - f2, 0.1)
        separate = 2.0 * smooth(hessian_energy, f1, 0.1) - smooth(hessian_energy, f2, 0.1)
        assert np.allclose(combined, separate, atol=1e-9)

    def test_weight_must_be_positive(self, hessian_energy):
        with pytest.raises(ValueError):
            smooth(hessian_energy, np.zeros(hessian_energy.n), 0.0)


class TestModes:
    def test_hessian_affine_modes(self):
        energy = mesh_hessian(disk_mesh(1.0, 4, 12))
        pairs = modes(energy, 6)
        assert len(pairs) == 6
        assert np.all(pairs.eigenvalues[:3] <= 1e-8 * pairs.eigenvalues[3])
        for a in range(3):
            v = pairs.eigenvectors[:, a]
            assert abs(energy.quadratic_form(v)) <= 1e-8 * pairs.eigenvalues[3]

    def test_neumann_laplacian_single_constant_mode(self):
        grid = rectangle_grid(8, 6, 0.25)
        pairs = modes(build_fd_laplacian_energy(grid, BoundaryCondition.ZERO_NEUMANN), 4)
        assert pairs.eigenvalues[0] <= 1e-8 * pairs.eigenvalues[1]
        v = pairs.eigenvectors[:, 0]
        assert np.allclose(v, v[0], rtol=1e-6)

    def test_squared_laplacian_spectrum(self):
        sphere = icosphere(2)
        ops = build_fem_operators(sphere)
        energy = fem_laplacian_energy(ops, BoundaryCondition.ZERO_NEUMANN)
        pairs = modes(energy, 9)
        laplacian = scipy.linalg.eigh(ops.L.toarray(), ops.M.toarray(), eigvals_only=True)[:9]
        assert abs(pairs.eigenvalues[0]) <= 1e-8 * pairs.eigenvalues[1]
        assert np.allclose(pairs.eigenvalues[1:], laplacian[1:] ** 2, rtol=1e-6, atol=0.0)


class TestSubspaceWeights:
    @pytest.fixture(params=["disk", "square"])
    def case(self, request):
        if request.param == "disk":
            mesh = disk_mesh(1.0, 4, 12)
            return mesh, [0, 37, 41, 45]
        mesh = square_mesh(8)
        return mesh, [0, 8, 72, 80, 4, 36, 44, 76]

    def test_handles_interpolate_identity(self, case):
        mesh, handles = case
        weights = subspace_weights(mesh_hessian(mesh), handles)
        assert weights.W.shape == (mesh.n, len(handles))
        assert np.allclose(weights.W[handles], np.eye(len(handles)), atol=1e-12)

    def test_partition_of_unity(self, case):
        mesh, handles = case
        weights = subspace_weights(mesh_hessian(mesh), handles)
        assert weights.row_sum_residual() <= 1e-8

    def test_linear_reproduction(self, case):
        mesh, handles = case
        weights = subspace_weights(mesh_hessian(mesh), handles)
        assert weights.reproduction_error() <= 1e-6 * mesh.bbox_diagonal

    def test_affine_targets(self, case):
        mesh, handles = case
        weights = subspace_weights(mesh_hessian(mesh), handles)
        x, y = mesh.positions.T
        g = 3.0 * x - y + 0.5
        assert np.allclose(weights.blend(g[handles]), g, atol=1e-8)

    def test_collinear_handles(self):
        mesh = square_mesh(4)
        with pytest.raises(RankDeficiencyError):
            subspace_weights(mesh_hessian(mesh), [0, 1, 2, 3])

    def test_too_few_handles(self):
        mesh = square_mesh(4)
        with pytest.raises(RankDeficiencyError):
            subspace_weights(mesh_hessian(mesh), [0, 24])

    def test_repeated_handles(self):
        mesh = square_mesh(4)
        with pytest.raises(ValueError):
            subspace_weights(mesh_hessian(mesh), [0, 4, 20, 20])

    def test_grid_weights(self):
        grid = rectangle_grid(6, 6, 0.2)
        weights = subspace_weights(grid_hessian(grid), [0, 5, 30, 35])
        assert weights.row_sum_residual() <= 1e-8
        assert weights.reproduction_error() <= 1e-6 * grid.bbox_diagonal


class TestAnnulus:
    def test_reference_conditions(self):
        profile = annulus_reference(0.5, 1.0)
        assert abs(profile.value(0.5) - 1.0) <= 1e-12
        assert abs(profile.value(1.0)) <= 1e-12
        assert abs(profile.second_derivative(0.5)) <= 1e-12
        assert abs(profile.second_derivative(1.0)) <= 1e-12

    def test_reference_is_radially_biharmonic(self):
        profile = annulus_reference(0.5, 1.0)
        # the radial Laplacian of a + b r^2 + c ln r + d r^2 ln r is 4b + 4d(ln r + 1)
        r = np.linspace(0.55, 0.95, 5)
        eps = 1e-4
        second = (profile.value(r + eps) - 2 * profile.value(r) + profile.value(r - eps)) / eps ** 2
        first = (profile.value(r + eps) - profile.value(r - eps)) / (2 * eps)
        lap = second + first / r
        assert np.allclose(lap, 4 * profile.b + 4 * profile.d * (np.log(r) + 1), atol=1e-5)

    def test_reference_radii(self):
        with pytest.raises(ValueError):
            annulus_reference(1.0, 0.5)

    def test_fd_error_decreases_but_levels_off(self):
        rows = convergence_study("fd", levels=3)
        errors = [row.error for row in rows]
        assert rows[0].rate is None
        assert errors[0] > errors[1] > errors[2]
        assert rows[-1].h == pytest.approx(rows[0].h / 4)
        # natural conditions act on the grid's staircase, not on the circles
        assert rows[-1].rate < 1.0
        assert errors[-1] <= 1e-2

    def test_fem_converges_at_first_order(self):
        rows = convergence_study("fem", levels=3)
        assert rows[0].error > rows[1].error > rows[2].error
        assert all(row.rate >= 1.0 for row in rows[1:])

    def test_cr_on_structured_annulus(self):
        fem = convergence_study("fem", levels=3)
        cr = convergence_study("cr", levels=3)
        assert cr[0].error > cr[1].error > cr[2].error
        assert all(row.rate >= 1.5 for row in cr[1:])
        assert cr[-1].error < fem[-1].error

    def test_study_forwards_solve_settings(self):
        with pytest.raises(ConvergenceError):
            convergence_study("fem", levels=1, tol=1e-30, max_refinement=0)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            convergence_study("dec")


class TestClampedEquivalence:
    def test_hessian_and_laplacian_agree_under_refinement(self):
        gaps = []
        for n in (8, 16, 32):
            grid = rectangle_grid(n + 1, n + 1, 1.0 / n)
            g = smooth_target(grid.positions)
            band = outer_rings(grid)
            constraints = ConstraintSet(band, g[band])
            u_hess = interpolate(grid_hessian(grid), constraints)
            u_lap = interpolate(build_fd_laplacian_energy(grid, BoundaryCondition.NATURAL), constraints)
            gaps.append(np.abs(u_hess - u_lap).max())
        assert gaps[0] > gaps[1] > gaps[2]

    def test_grid_and_mesh_agree_under_refinement(self):
        gaps = []
        for n in (8, 16, 32):
            grid = rectangle_grid(n + 1, n + 1, 1.0 / n)
            mesh = square_mesh(n)
            grid_order = np.lexsort((grid.positions[:, 0], grid.positions[:, 1]))
            mesh_order = np.lexsort((mesh.positions[:, 0], mesh.positions[:, 1]))
            g = smooth_target(grid.positions)
            band = outer_rings(grid)
            u_grid = interpolate(grid_hessian(grid), ConstraintSet(band, g[band]))
            mesh_g = smooth_target(mesh.positions)
            rank = np.empty(grid.n, dtype=np.int64)
            rank[grid_order] = np.arange(grid.n)
            mesh_band = mesh_order[rank[band]]
            u_mesh = interpolate(mesh_hessian(mesh), ConstraintSet(mesh_band, mesh_g[mesh_band]))
            gaps.append(np.abs(u_grid[grid_order] - u_mesh[mesh_order]).max())
        assert gaps[0] > gaps[1] > gaps[2]

"""
Tests for L1 smoothing and the L1 flow of mesh coordinates.
"""

import pytest
import numpy as np
import scipy.optimize
import os
import sys

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from hessmooth.domain import BarDomain, TriMesh, disk_mesh, icosphere, rectangle_grid, square_mesh
from hessmooth.errors import ConvergenceError, DomainError, FlowError
from hessmooth.solve import (
    L1Problem,
    angle_defects,
    l1_energy_density,
    l1_flow,
    l1_operator,
    l1_problem_from,
    l1_smooth,
    total_absolute_defect,
)


def triangle_wave(x):
    return 1.0 - np.abs(2.0 * x - 1.0)


def noisy_sphere(seed=0):
    sphere = icosphere(2)
    scale = 1.0 + 0.05 * np.random.default_rng(seed).uniform(-1.0, 1.0, sphere.n)
    return sphere.with_positions(sphere.positions * scale[:, None])


def weighted_l1(H, Mtilde, positions):
    return sum(Mtilde.diagonal() @ np.abs(H @ positions[:, a]) for a in range(positions.shape[1]))


def dense_optimum(problem):
    """
    Optimal objective from the dual box-constrained least-squares problem.

    The dual of λ·Σ w_k|(Hu)_k| + ½|u − f|²_M is a bounded least-squares
    problem in p with |p_k| ≤ λ·w_k; strong duality gives the primal value.
    """
    H = problem.H.toarray()
    m = problem.M.diagonal()
    A = (H / np.sqrt(m)).T
    c = np.sqrt(m) * problem.f
    bound = problem.lam * problem.Mtilde.diagonal()
    result = scipy.optimize.lsq_linear(A, c, bounds=(-bound, bound), method='bvls', tol=1e-15)
    residual = A @ result.x - c
    u = problem.f - (H.T @ result.x) / m
    return 0.5 * (c @ c) - 0.5 * (residual @ residual), u


class TestL1Smooth:
    def test_affine_input_is_fixed_point(self):
        grid = rectangle_grid(6, 6, 0.2)
        x, y = grid.positions.T
        f = 1.0 + 2.0 * x - y
        result = l1_smooth(l1_problem_from(grid, f, 1e-2))
        assert np.allclose(result.u, f, atol=1e-10)
        assert result.iterations == 1

    def test_affine_input_on_mesh(self):
        mesh = disk_mesh(1.0, 3, 12)
        x, y = mesh.positions.T
        f = 0.5 - x + 3.0 * y
        for kind in ("hessian", "laplacian"):
            result = l1_smooth(l1_problem_from(mesh, f, 1e-2, kind=kind))
            assert np.allclose(result.u, f, atol=1e-10)

    def test_triangle_wave_recovery(self):
        bar = BarDomain(101, 0.01)
        x = bar.positions[:, 0]
        noise = np.random.default_rng(11).uniform(-0.05, 0.05, bar.n)
        problem = l1_problem_from(bar, triangle_wave(x) + noise, 3e-3)
        result = l1_smooth(problem)
        Hu = np.abs(problem.H @ result.u)
        assert np.count_nonzero(Hu < 1e-4 * Hu.max()) >= 0.8 * Hu.size

    def test_dense_oracle(self):
        bar = BarDomain(12, 1.0 / 11.0)
        f = np.random.default_rng(12).standard_normal(bar.n)
        problem = l1_problem_from(bar, f, 1e-3, rel_tol=1e-10, abs_tol=1e-14, max_iterations=50000)
        result = l1_smooth(problem)
        optimum, u_star = dense_optimum(problem)
        assert problem.objective(result.u) == pytest.approx(optimum, rel=1e-6)
        assert problem.objective(u_star) == pytest.approx(optimum, rel=1e-6)

    def test_certificate_is_subgradient(self):
        bar = BarDomain(41, 0.025)
        x = bar.positions[:, 0]
        noise = np.random.default_rng(13).uniform(-0.05, 0.05, bar.n)
        lam = 1e-3
        result = l1_smooth(l1_problem_from(bar, triangle_wave(x) + noise, lam))
        certificate = result.certificate(lam)
        assert np.all(np.abs(certificate) <= 1.0 + 1e-9)
        support = result.z != 0
        assert support.any()
        assert np.allclose(certificate[support], np.sign(result.z[support]), atol=1e-9)

    def test_objective_improves_on_data(self):
        grid = rectangle_grid(8, 8, 0.125)
        f = np.random.default_rng(14).standard_normal(grid.n)
        problem = l1_problem_from(grid, f, 1e-3)
        result = l1_smooth(problem)
        assert result.objective[-1] <= problem.objective(f)
        assert result.objective[-1] <= result.objective[0] * (1.0 + 1e-9)
        assert len(result.primal_residuals) == result.iterations

    def test_objective_settles_after_transient(self):
        bar = BarDomain(101, 0.01)
        x = bar.positions[:, 0]
        noise = np.random.default_rng(11).uniform(-0.05, 0.05, bar.n)
        result = l1_smooth(l1_problem_from(bar, triangle_wave(x) + noise, 3e-3))
        assert result.iterations > 10
        settled = result.objective[9]
        assert max(result.objective[10:]) <= settled + 1e-6 * abs(settled)
        assert result.objective[-1] <= settled

    def test_solve_options_reach_u_step(self):
        bar = BarDomain(41, 0.025)
        f = np.random.default_rng(16).standard_normal(bar.n)
        with pytest.raises(ConvergenceError, match="linear solve"):
            l1_smooth(l1_problem_from(bar, f, 1e-3), tol=1e-30, max_refinement=0)

    def test_iteration_cap(self):
        bar = BarDomain(41, 0.025)
        f = np.random.default_rng(15).standard_normal(bar.n)
        with pytest.raises(ConvergenceError) as info:
            l1_smooth(l1_problem_from(bar, f, 1e-3, max_iterations=1))
        assert len(info.value.history) == 1

    def test_invalid_problem(self):
        H, Mtilde, M = l1_operator(BarDomain(10, 0.1))
        with pytest.raises(ValueError):
            L1Problem(H, Mtilde, M, np.zeros(10), 0.0)
        with pytest.raises(ValueError):
            L1Problem(H, Mtilde, M, np.zeros(9), 1.0)

    def test_default_rho_is_lambda(self):
        H, Mtilde, M = l1_operator(BarDomain(10, 0.1))
        assert L1Problem(H, Mtilde, M, np.zeros(10), 0.25).rho == 0.25

    def test_unknown_operator(self):
        with pytest.raises(ValueError):
            l1_operator(rectangle_grid(5, 5, 1.0), "biharmonic")


class TestEnergyDensity:
    def test_affine_field_has_zero_density(self):
        mesh = disk_mesh(1.0, 3, 12)
        x, y = mesh.positions.T
        density = l1_energy_density(mesh, 2.0 * x + y, "hessian")
        assert np.abs(density).max() <= 1e-10

    def test_grid_quadratic(self):
        grid = rectangle_grid(5, 5, 1.0)
        density = l1_energy_density(grid, grid.positions[:, 0] ** 2, "hessian")
        assert np.allclose(density[grid.interior], 2.0)
        boundary = np.setdiff1d(np.arange(grid.n), grid.interior)
        assert not np.any(density[boundary])

    def test_columns_are_summed(self):
        grid = rectangle_grid(5, 5, 1.0)
        x, y = grid.positions.T
        both = l1_energy_density(grid, np.column_stack([x ** 2, y ** 2]), "laplacian")
        assert np.allclose(both[grid.interior], 4.0)


class TestAngleDefects:
    def test_flat_disk(self):
        assert np.allclose(angle_defects(disk_mesh(1.0, 3, 12))[0], 0.0, atol=1e-12)

    def test_gauss_bonnet_on_sphere(self):
        assert angle_defects(icosphere(1)).sum() == pytest.approx(4.0 * np.pi)


class TestL1Flow:
    def test_tiny_lambda_keeps_geometry(self):
        sphere = icosphere(1)
        sequence = l1_flow(sphere, 1e-12, 1)
        assert len(sequence) == 2
        assert sequence[0] is sphere
        assert np.abs(sequence[1].positions - sphere.positions).max() <= 1e-8 * sphere.bbox_diagonal

    def test_planar_patch_is_fixed(self):
        planar = square_mesh(4)
        lifted = np.column_stack([planar.positions, np.zeros(planar.n)])
        patch = TriMesh(lifted, planar.triangles)
        sequence = l1_flow(patch, 1e-2, 2)
        assert len(sequence) == 3
        assert np.allclose(sequence[-1].positions, lifted, atol=1e-10)

    def test_step_reduces_weighted_l1(self):
        sphere = noisy_sphere()
        H, Mtilde, _ = l1_operator(sphere, "hessian")
        sequence = l1_flow(sphere, 1e-2, 1)
        before = weighted_l1(H, Mtilde, sphere.positions)
        after = weighted_l1(H, Mtilde, sequence[1].positions)
        assert after < before

    def test_curvature_proxy_decreases_on_coarse_sphere(self):
        sphere = noisy_sphere()
        assert sphere.m <= 500
        sequence = l1_flow(sphere, 3e-4, 3, "hessian", max_iterations=20000)
        proxy = [total_absolute_defect(mesh) for mesh in sequence]
        assert proxy[0] > proxy[1] > proxy[2] > proxy[3]
        assert proxy[-1] >= 4.0 * np.pi - 1e-9

    def test_settings_reach_flow_solves(self):
        settings = {"tolerances": {"solve": 1e-30}, "solve": {"max_refinement": 0}}
        with pytest.raises(FlowError) as info:
            l1_flow(icosphere(1), 1e-3, 1, settings=settings)
        assert isinstance(info.value.cause, ConvergenceError)

    def test_failed_step_reports_step(self):
        with pytest.raises(FlowError) as info:
            l1_flow(noisy_sphere(), 1e-2, 2, max_iterations=1)
        assert info.value.step == 1
        assert isinstance(info.value.cause, ConvergenceError)

    def test_planar_mesh_rejected(self):
        with pytest.raises(DomainError):
            l1_flow(disk_mesh(1.0, 3, 12), 1e-2, 1)

    def test_steps_must_be_positive(self):
        with pytest.raises(ValueError):
            l1_flow(icosphere(1), 1e-2, 0)

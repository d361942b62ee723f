"""
Helpers shared by the subcommands: settings, domain and energy loading, and
mapping of errors to exit codes.
"""

import os
import sys
from pathlib import Path

from ..core.data_handler import DataHandler
from ..core.settings_loader import Settings, SettingsLoader
from ..domain import GridDomain, TriMesh
from ..errors import DomainError, SolverError
from ..fd_ops import blend_energy, build_fd_hessian, build_fd_laplacian_energy, fd_hessian_energy
from ..fem_ops import build_fem_operators, cr_energy, fem_blend_energy, fem_hessian_energy, fem_laplacian_energy
from ..sparse import BoundaryCondition, DiscreteEnergy, EnergyKind

EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_IO = 4

_LAPLACIAN_BC = {
    EnergyKind.LAPLACIAN_ZERO_NEUMANN: BoundaryCondition.ZERO_NEUMANN,
    EnergyKind.LAPLACIAN_NATURAL: BoundaryCondition.NATURAL,
}


class UsageError(ValueError):
    """Missing or inconsistent command line input."""


def fail(message: str, code: int) -> int:
    print(f"❌ {message}", file=sys.stderr)
    return code


def report_error(error: Exception) -> int:
    """Print an error to stderr and return its exit code."""
    if isinstance(error, SolverError):
        return fail(f"Error: {error}", EXIT_SOLVER)
    if isinstance(error, (OSError, DomainError)):
        return fail(f"Error: {error}", EXIT_IO)
    return fail(f"Error: {error}", EXIT_USAGE)


def require_file(path, label: str) -> str:
    """Raise UsageError with ``<label>: file not found`` unless path exists."""
    if path is None:
        raise UsageError(f"{label}: a file is required")
    if not os.path.exists(path):
        raise UsageError(f"{label}: file not found")
    return path


def load_settings(args) -> Settings:
    settings = SettingsLoader().load_settings(getattr(args, 'config', None))
    if getattr(args, 'seed', None) is not None:
        settings['eigen']['seed'] = args.seed
    if getattr(args, 'range', None) is not None:
        settings['output']['heatmap_range'] = list(args.range)
    return settings


def data_handler(settings: Settings) -> DataHandler:
    return DataHandler(
        heatmap_range=settings.value('output.heatmap_range'),
        degenerate_tol=settings.value('tolerances.degenerate_area'),
    )


def solver_options(settings: Settings) -> dict:
    """Linear-solve keyword arguments taken from the loaded settings."""
    return {
        'tol': settings.value('tolerances.solve'),
        'rank_tol': settings.value('tolerances.rank'),
        'max_refinement': settings.value('solve.max_refinement'),
    }


def load_domain(args, handler: DataHandler):
    if args.mesh is None and args.grid is None:
        raise UsageError("one of --mesh or --grid is required")
    if args.mesh is not None:
        require_file(args.mesh, "mesh")
        print(f"Loading mesh from {args.mesh}...")
        return handler.load_domain(mesh=args.mesh)
    require_file(args.grid, "grid")
    if args.h is None:
        raise UsageError("--h is required with --grid")
    print(f"Loading grid mask from {args.grid}...")
    return handler.load_domain(grid=args.grid, h=args.h)


def build_energy(domain, name: str, alpha: float = 0.5) -> DiscreteEnergy:
    """Energy named as on the command line, on a grid or a mesh."""
    kind = EnergyKind(name)
    if isinstance(domain, GridDomain):
        if kind is EnergyKind.CROUZEIX_RAVIART:
            raise UsageError("the cr energy needs a triangle mesh")
        if kind in _LAPLACIAN_BC:
            return build_fd_laplacian_energy(domain, _LAPLACIAN_BC[kind])
        hessian = fd_hessian_energy(build_fd_hessian(domain))
        if kind is EnergyKind.BLEND:
            return blend_energy(hessian, build_fd_laplacian_energy(domain, BoundaryCondition.NATURAL), alpha)
        return hessian
    if not isinstance(domain, TriMesh):
        raise UsageError(f"unsupported domain {type(domain).__name__}")
    if kind is EnergyKind.CROUZEIX_RAVIART:
        return cr_energy(domain)
    ops = build_fem_operators(domain)
    if kind in _LAPLACIAN_BC:
        return fem_laplacian_energy(ops, _LAPLACIAN_BC[kind])
    if kind is EnergyKind.BLEND:
        return fem_blend_energy(ops, alpha)
    return fem_hessian_energy(ops)


def output_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def announce(paths) -> None:
    for path in paths:
        print(f"✅ Wrote {path}")

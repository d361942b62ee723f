"""
Flow command - repeated L1 smoothing of mesh coordinates.
"""

from ..domain import TriMesh
from ..solve import l1_energy_density, l1_flow, total_absolute_defect
from .common import (
    UsageError,
    announce,
    data_handler,
    load_domain,
    load_settings,
    output_dir,
    report_error,
)
from .l1 import operator_kind


def flow_command(args):
    """
    Handle the flow command.

    Writes step_NNN.off for the input and every step, with the matching
    energy_density_NNN.csv.
    """
    try:
        if args.lam is None:
            raise UsageError("--lambda is required")
        kind = operator_kind(args.energy)
        settings = load_settings(args)
        handler = data_handler(settings)
        mesh = load_domain(args, handler)
        if not isinstance(mesh, TriMesh):
            raise UsageError("flow needs --mesh")

        print(f"Running {args.steps} flow steps ({kind}, lambda {args.lam})...")
        sequence = l1_flow(mesh, args.lam, args.steps, kind, settings)

        out = output_dir(args)
        written = []
        for step, current in enumerate(sequence):
            mesh_path = out / f"step_{step:03d}.off"
            handler.save_mesh_off(mesh_path, current)
            density_path = out / f"energy_density_{step:03d}.csv"
            density = l1_energy_density(current, current.positions, kind)
            handler.save_table(density_path, ['index', 'density'], enumerate(density))
            written += [mesh_path, density_path]
            print(f"  step {step}: total |angle defect| {total_absolute_defect(current):.6f}")
        announce(written)
        return 0

    except Exception as e:
        return report_error(e)

"""
Interpolate command - smooth field through scattered values.
"""

from ..domain import snap_points
from ..solve import interpolate
from .common import (
    announce,
    build_energy,
    data_handler,
    load_domain,
    load_settings,
    output_dir,
    report_error,
    require_file,
    solver_options,
)


def interpolate_command(args):
    """
    Handle the interpolate command.

    Args:
        args: Parsed command line arguments

    Returns:
        0 on success, 2/3/4 on usage, solver or I/O errors
    """
    try:
        require_file(args.constraints, "constraints")
        settings = load_settings(args)
        handler = data_handler(settings)
        domain = load_domain(args, handler)

        points, values = handler.load_scattered_csv(args.constraints)
        constraints = snap_points(domain, points, values)
        print(f"Interpolating {len(constraints)} values with the {args.energy} energy...")

        energy = build_energy(domain, args.energy, args.alpha)
        u = interpolate(energy, constraints, **solver_options(settings))
        announce(handler.save_field(output_dir(args), "field", domain, u))
        return 0

    except Exception as e:
        return report_error(e)

"""
Smooth command - data smoothing with a quadratic smoothness energy.
"""

from ..solve import smooth
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


def smooth_command(args):
    """
    Handle the smooth command.

    Args:
        args: Parsed command line arguments

    Returns:
        0 on success, 2/3/4 on usage, solver or I/O errors
    """
    try:
        require_file(args.data, "data")
        settings = load_settings(args)
        handler = data_handler(settings)
        domain = load_domain(args, handler)
        f = handler.load_field_csv(args.data, domain.n)

        print(f"Smoothing with the {args.energy} energy, weight {args.weight}...")
        energy = build_energy(domain, args.energy, args.alpha)
        u = smooth(energy, f, args.weight, **solver_options(settings))
        announce(handler.save_field(output_dir(args), "field", domain, u))
        return 0

    except Exception as e:
        return report_error(e)

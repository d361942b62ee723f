"""
L1 command - piecewise-planar smoothing of a field.
"""

from ..solve import l1_problem_from, l1_smooth
from .common import (
    UsageError,
    announce,
    data_handler,
    load_domain,
    load_settings,
    output_dir,
    report_error,
    require_file,
    solver_options,
)

# --energy value -> L1 operator kind
OPERATOR_KINDS = {'hessian': 'hessian', 'laplacian-natural': 'laplacian'}


def operator_kind(energy: str) -> str:
    if energy not in OPERATOR_KINDS:
        raise UsageError(f"L1 smoothing supports --energy hessian or laplacian-natural, got {energy}")
    return OPERATOR_KINDS[energy]


def l1_command(args):
    """
    Handle the l1 command.

    Args:
        args: Parsed command line arguments

    Returns:
        0 on success, 2/3/4 on usage, solver or I/O errors
    """
    try:
        require_file(args.data, "data")
        if args.lam is None:
            raise UsageError("--lambda is required")
        kind = operator_kind(args.energy)
        settings = load_settings(args)
        handler = data_handler(settings)
        domain = load_domain(args, handler)
        f = handler.load_field_csv(args.data, domain.n)

        print(f"L1 smoothing ({kind}) with lambda {args.lam}...")
        options = solver_options(settings)
        result = l1_smooth(l1_problem_from(domain, f, args.lam, kind, settings),
                           tol=options['tol'], max_refinement=options['max_refinement'])
        print(f"Converged in {result.iterations} iterations")
        announce(handler.save_field(output_dir(args), "field", domain, result.u))
        return 0

    except Exception as e:
        return report_error(e)

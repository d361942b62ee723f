"""
Annulus command - convergence against the analytic radial minimizer.
"""

from ..solve import convergence_study
from .common import announce, data_handler, load_settings, output_dir, report_error, solver_options


def annulus_command(args):
    """
    Handle the annulus command.

    Writes convergence.csv with columns h, Linf_error, rate.
    """
    try:
        settings = load_settings(args)
        handler = data_handler(settings)
        print(f"Annulus study ({args.method}), r0={args.r0}, r1={args.r1}, {args.levels} levels...")
        rows = convergence_study(args.method, args.levels, args.r0, args.r1, **solver_options(settings))

        path = output_dir(args) / "convergence.csv"
        handler.save_table(path, ['h', 'Linf_error', 'rate'], rows)
        for row in rows:
            rate = "-" if row.rate is None else f"{row.rate:.3f}"
            print(f"  h={row.h:.5g}  error={row.error:.4e}  rate={rate}")
        announce([path])
        return 0

    except Exception as e:
        return report_error(e)

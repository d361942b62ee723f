#!/usr/bin/env python3
"""
hessmooth - smoothness energies on grids and meshes
Main CLI entry point for all experiments.
"""

import argparse
import logging
import sys

from . import __version__
from .commands.annulus import annulus_command
from .commands.flow import flow_command
from .commands.interpolate import interpolate_command
from .commands.l1 import l1_command
from .commands.modes import modes_command
from .commands.smooth import smooth_command
from .commands.weights import weights_command
from .sparse import EnergyKind

ENERGIES = [kind.value for kind in EnergyKind]


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', default='out', help='Output directory (default: out)')
    common.add_argument('--config', help='Settings file overriding solver tolerances (JSON or YAML)')
    common.add_argument('--seed', type=int, help='Seed for randomized initialization')
    common.add_argument('--range', nargs=2, type=float, metavar=('LO', 'HI'),
                        help='Fixed heatmap range (default: per-file min/max)')
    common.add_argument('--verbose', '-v', action='store_true', help='Log solver details')
    return common


def _domain_parser() -> argparse.ArgumentParser:
    domain = argparse.ArgumentParser(add_help=False)
    source = domain.add_mutually_exclusive_group()
    source.add_argument('--mesh', help='Triangle mesh (OFF or OBJ)')
    source.add_argument('--grid', help='Grid mask (PGM); pixels >= 128 are inside')
    domain.add_argument('--h', type=float, help='Grid spacing (required with --grid)')
    domain.add_argument('--energy', choices=ENERGIES, default='hessian',
                        help='Smoothness energy (default: hessian)')
    domain.add_argument('--alpha', type=float, default=0.5,
                        help='Hessian share of the blend energy (default: 0.5)')
    return domain


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='hessmooth',
        description='hessmooth: squared Hessian and Laplacian smoothness energies on grids and meshes',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s interpolate --mesh disk.off --constraints samples.csv --out run
  %(prog)s smooth --grid mask.pgm --h 0.01 --data noisy.csv --weight 1e-3
  %(prog)s modes --mesh disk.off --energy hessian -k 6
  %(prog)s weights --mesh square.obj --handles handles.csv
  %(prog)s l1 --mesh patch.off --data noisy.csv --lambda 1e-3
  %(prog)s flow --mesh sphere.off --lambda 1e-2 --steps 3
  %(prog)s annulus --levels 3 --method fem
        """
    )

    parser.add_argument('--version', action='version', version=f'hessmooth {__version__}')

    subparsers = parser.add_subparsers(
        dest='command',
        help='Available commands',
        metavar='COMMAND'
    )
    common = _common_parser()
    domain = _domain_parser()

    interpolate_parser = subparsers.add_parser(
        'interpolate', parents=[common, domain],
        help='Interpolate scattered values',
        description='Minimize the energy subject to values snapped to the nearest nodes'
    )
    interpolate_parser.add_argument('--constraints', help='CSV with header x,y[,z],value')

    smooth_parser = subparsers.add_parser(
        'smooth', parents=[common, domain],
        help='Smooth a field',
        description='Solve (M + w Q) u = M f for a field f given as index,value CSV'
    )
    smooth_parser.add_argument('--data', help='Field CSV with header index,value')
    smooth_parser.add_argument('--weight', type=float, default=1.0,
                               help='Smoothness weight w (default: 1.0)')

    modes_parser = subparsers.add_parser(
        'modes', parents=[common, domain],
        help='Lowest eigenmodes of an energy',
        description='Write spectrum.csv and one field per mode'
    )
    modes_parser.add_argument('-k', type=int, default=10, help='Number of modes (default: 10)')

    weights_parser = subparsers.add_parser(
        'weights', parents=[common, domain],
        help='Linear subspace weights',
        description='One weight field per handle with w_i(p_j) = delta_ij'
    )
    weights_parser.add_argument('--handles', help='CSV with header index, or x,y[,z] snapped to nodes')

    l1_parser = subparsers.add_parser(
        'l1', parents=[common, domain],
        help='L1 (piecewise-planar) smoothing',
        description='ADMM minimization of lambda*|Hu|_1 + 1/2 |u - f|_M^2'
    )
    l1_parser.add_argument('--data', help='Field CSV with header index,value')
    l1_parser.add_argument('--lambda', dest='lam', type=float, help='Smoothness weight lambda')

    flow_parser = subparsers.add_parser(
        'flow', parents=[common, domain],
        help='L1 flow of mesh coordinates',
        description='Repeated L1 smoothing of the vertex positions of a 3D mesh'
    )
    flow_parser.add_argument('--lambda', dest='lam', type=float, help='Smoothness weight (time step)')
    flow_parser.add_argument('--steps', type=int, default=3, help='Number of steps (default: 3)')

    annulus_parser = subparsers.add_parser(
        'annulus', parents=[common],
        help='Annulus convergence study',
        description='L-infinity error against the analytic radial minimizer over dyadic refinements'
    )
    annulus_parser.add_argument('--levels', type=int, default=3, help='Refinement levels (default: 3)')
    annulus_parser.add_argument('--method', choices=['fd', 'fem', 'cr'], default='fd',
                                help='Discretization (default: fd)')
    annulus_parser.add_argument('--r0', type=float, default=0.5, help='Inner radius (default: 0.5)')
    annulus_parser.add_argument('--r1', type=float, default=1.0, help='Outer radius (default: 1.0)')

    return parser


COMMANDS = {
    'interpolate': interpolate_command,
    'smooth': smooth_command,
    'modes': modes_command,
    'weights': weights_command,
    'l1': l1_command,
    'flow': flow_command,
    'annulus': annulus_command,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command not in COMMANDS:
        # If no command specified, show help
        parser.print_help()
        return 2

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s',
    )
    return COMMANDS[args.command](args)


if __name__ == '__main__':
    sys.exit(main())

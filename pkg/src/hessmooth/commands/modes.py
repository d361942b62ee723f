"""
Modes command - lowest-frequency eigenmodes of an energy.
"""

from ..solve import modes
from .common import (
    announce,
    build_energy,
    data_handler,
    load_domain,
    load_settings,
    output_dir,
    report_error,
)


def modes_command(args):
    """
    Handle the modes command.

    Writes spectrum.csv and one mode_NN field per eigenvector.
    """
    try:
        settings = load_settings(args)
        handler = data_handler(settings)
        domain = load_domain(args, handler)
        energy = build_energy(domain, args.energy, args.alpha)

        print(f"Computing {args.k} modes of the {args.energy} energy...")
        pairs = modes(
            energy, args.k,
            tol=settings.value('tolerances.eig'),
            dense_limit=settings.value('eigen.dense_limit'),
            max_iterations=settings.value('eigen.max_iterations'),
            seed=settings.value('eigen.seed'),
            shift=settings.value('solve.shift'),
        )

        out = output_dir(args)
        spectrum = out / "spectrum.csv"
        handler.save_spectrum(spectrum, pairs.eigenvalues)
        written = [spectrum]
        for index in range(len(pairs)):
            written += handler.save_field(out, f"mode_{index:02d}", domain, pairs.eigenvectors[:, index])
        announce(written)
        return 0

    except Exception as e:
        return report_error(e)

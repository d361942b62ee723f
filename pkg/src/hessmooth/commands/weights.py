"""
Weights command - per-handle linear subspace weights.
"""

from ..solve import subspace_weights
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


def weights_command(args):
    """
    Handle the weights command.

    Writes one weight_NN field per handle and rowsum_residual.txt.
    """
    try:
        require_file(args.handles, "handles")
        settings = load_settings(args)
        handler = data_handler(settings)
        domain = load_domain(args, handler)
        handles = handler.load_handles(args.handles, domain)

        print(f"Computing weights for {len(handles)} handles with the {args.energy} energy...")
        energy = build_energy(domain, args.energy, args.alpha)
        weights = subspace_weights(energy, handles, **solver_options(settings))

        out = output_dir(args)
        written = []
        for index in range(weights.m):
            written += handler.save_field(out, f"weight_{index:02d}", domain, weights.W[:, index])
        residual_path = out / "rowsum_residual.txt"
        residual_path.write_text(f"{weights.row_sum_residual()!r}\n", encoding='utf-8')
        written.append(residual_path)
        announce(written)
        return 0

    except Exception as e:
        return report_error(e)

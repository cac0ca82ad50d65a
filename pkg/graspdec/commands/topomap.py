from pathlib import Path

import click
from loguru import logger

from graspdec.cli.guard import exit_on_error
from graspdec.core.config import config
from graspdec.core.model import standard_montage
from graspdec.core.sessions import (
    build_manifest,
    prepare_out_dir,
    read_csp_model,
    write_json,
    write_manifest,
    write_text,
)
from graspdec.core.topomap import export_csp_maps, grid_file_name, grid_to_csv, maps_document
from graspdec.core.utils import display_table

MAPS_FILE = "maps.json"


@click.command("topomap")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--resolution", type=int, default=None, help="Grid size N for an N x N map (default: configured)")
@click.option("--filters", "use_filters", is_flag=True, default=False,
              help="Map the spatial filters (rows of W) instead of the patterns")
@click.option("--format", "output_format", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.pass_context
def cmd(ctx, model_file, out_dir, resolution, use_filters, output_format):
    """
    Export scalp-map grids for every component of a fitted CSP model.
    """
    with exit_on_error(ctx):
        resolution = config.topomap_resolution if resolution is None else resolution
        model = read_csp_model(model_file)
        maps = export_csp_maps(model, standard_montage(), resolution, use_filters)
        band = model.band.name.value if model.band else None
        phase = model.phase.value if model.phase else None

        out_dir = prepare_out_dir(out_dir)
        written = []
        if output_format == "csv":
            for component in maps:
                written.append(write_text(out_dir / grid_file_name(component), grid_to_csv(component, band, phase)))
            written.append(write_json(out_dir / MAPS_FILE, maps_document(maps, band, phase, include_values=False)))
        else:
            written.append(write_json(out_dir / MAPS_FILE, maps_document(maps, band, phase)))

        configuration = {"resolution": resolution, "kind": maps[0].kind, "format": output_format}
        write_manifest(out_dir, build_manifest("topomap", None, configuration, [model_file], written,
                                               base_dir=out_dir))
        logger.info(f"Wrote {len(maps)} maps to {out_dir}")
        display_table(
            [
                {"rank": m.rank, "eigenvalue": f"{m.eigenvalue:.4f}", "label": m.label or ""}
                for m in maps
            ],
            ["rank", "eigenvalue", "label"],
        )

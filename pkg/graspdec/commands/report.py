from pathlib import Path

import click
from loguru import logger

from graspdec.cli.guard import exit_on_error
from graspdec.core.classify import build_accuracy_table
from graspdec.core.errors import ValidationError
from graspdec.core.sessions import build_manifest, read_accuracy, write_json, write_text


@click.command("report")
@click.argument("accuracy_files", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--format", "output_format", type=click.Choice(["csv", "md"]), default="md", show_default=True)
@click.option("--stats", is_flag=True, default=False, help="Append per-column statistics and the phase contrast")
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the report here (plus <name>.manifest.json) instead of stdout")
@click.pass_context
def cmd(ctx, accuracy_files, output_format, stats, out_file):
    """
    Subject-by-column accuracy table with a Mean row, one row per accuracy file.
    """
    with exit_on_error(ctx):
        per_subject = {}
        for path in accuracy_files:
            subject_id, cells = read_accuracy(path)
            if subject_id in per_subject:
                raise ValidationError(f"{path}: subject {subject_id} appears more than once")
            per_subject[subject_id] = cells
            logger.debug(f"{path}: {subject_id} with {len(cells)} columns")

        table = build_accuracy_table(per_subject)
        text = table.to_csv(stats=stats) if output_format == "csv" else table.to_markdown(stats=stats)

        if out_file is None:
            click.echo(text, nl=False)
            return

        write_text(out_file, text)
        configuration = {"format": output_format, "stats": stats}
        manifest = build_manifest("report", None, configuration, accuracy_files, [out_file],
                                  base_dir=out_file.parent)
        write_json(out_file.with_name(f"{out_file.stem}.manifest.json"), manifest)
        logger.info(f"Wrote report for {len(per_subject)} subject(s) to {out_file}")

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
from loguru import logger

from graspdec.cli.guard import exit_on_error
from graspdec.core.errors import SimulationConfigError
from graspdec.core.sessions import build_manifest, prepare_out_dir, read_json, write_manifest, write_session
from graspdec.core.simulate import PROTOCOL_PRESETS, ProtocolConfig, SynthesisConfig, simulate_session
from graspdec.core.utils import display_table, substream_int

CONFIG_SECTIONS = ("preset", "protocol", "synthesis")


def _load_settings(config_path: Path | None) -> dict:
    if config_path is None:
        return {}
    settings = read_json(config_path)
    if not isinstance(settings, dict):
        raise SimulationConfigError(f"{config_path}: expected a JSON object")
    unknown = sorted(set(settings) - set(CONFIG_SECTIONS))
    if unknown:
        raise SimulationConfigError(f"{config_path}: unknown section(s) {', '.join(unknown)}")
    for section in ("protocol", "synthesis"):
        if not isinstance(settings.get(section, {}), dict):
            raise SimulationConfigError(f"{config_path}: '{section}' must be a JSON object")
    return settings


@click.command("simulate")
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="JSON file with 'preset', 'protocol' and 'synthesis' sections")
@click.option("--seed", type=int, default=None, help="Master seed (default: configured seed)")
@click.option("--preset", type=click.Choice(list(PROTOCOL_PRESETS)), default=None,
              help="Protocol preset (default: total-50)")
@click.option("--subjects", type=click.IntRange(min=1), default=1, show_default=True,
              help="Number of sessions; more than one writes s1..sN subdirectories")
@click.pass_context
def cmd(ctx, out_dir, config_path, seed, preset, subjects):
    """
    Simulate a recording session: event log, synthetic EEG and ground truth.
    """
    with exit_on_error(ctx):
        seed = ctx.obj["seed"] if seed is None else seed
        settings = _load_settings(config_path)
        preset = preset or settings.get("preset", "total-50")
        if preset not in PROTOCOL_PRESETS:
            raise SimulationConfigError(f"unknown preset '{preset}'")
        protocol_settings = {**PROTOCOL_PRESETS[preset], **settings.get("protocol", {})}
        synthesis_settings = settings.get("synthesis", {})

        out_dir = prepare_out_dir(out_dir)
        if subjects == 1:
            plan = [("s1", seed, out_dir)]
        else:
            plan = [(f"s{i}", substream_int(seed, f"subject/s{i}"), out_dir / f"s{i}") for i in range(1, subjects + 1)]

        def build(item):
            subject_id, subject_seed, _ = item
            protocol = ProtocolConfig.from_dict({**protocol_settings, "seed": subject_seed})
            synthesis = SynthesisConfig.from_dict({**synthesis_settings, "seed": subject_seed})
            return protocol, synthesis, simulate_session(protocol, synthesis, subject_id)

        threads = min(ctx.obj["threads"], len(plan))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                sessions = list(pool.map(build, plan))
        else:
            sessions = [build(item) for item in plan]

        summary = []
        for (subject_id, subject_seed, session_dir), (protocol, synthesis, artifacts) in zip(plan, sessions):
            written = write_session(artifacts, session_dir)
            configuration = {"preset": preset, "protocol": protocol.to_dict(), "synthesis": synthesis.to_dict()}
            inputs = [config_path] if config_path else []
            write_manifest(
                session_dir,
                build_manifest("simulate", subject_seed, configuration, inputs, written, base_dir=session_dir),
            )
            summary.append({
                "subject": subject_id,
                "seed": subject_seed,
                "trials": protocol.n_trials,
                "samples": artifacts.recording.n_samples,
                "directory": str(session_dir),
            })
        logger.info(f"Simulated {len(summary)} session(s) under {out_dir}")
        display_table(summary, ["subject", "seed", "trials", "samples", "directory"], max_col_width=60)

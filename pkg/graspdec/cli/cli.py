from dotenv import load_dotenv, find_dotenv
load_dotenv(find_dotenv(usecwd=True))


import sys
import json
import importlib

import click
from loguru import logger

from graspdec.core.config import config, LOG_LEVELS
from graspdec.core.errors import ConfigError
from graspdec.cli.logger import setup_logger
from graspdec.core.paths import get_project_root

COMMAND_FOLDER = get_project_root() / "graspdec" / "commands"

class GraspdecCLI(click.Group):
    def list_commands(self, ctx):
        return sorted(
            f.stem
            for f in COMMAND_FOLDER.glob("*.py")
            if f.name not in ("__init__.py",) and not f.name.startswith("_")
        )

    def get_command(self, ctx, name):
        if name not in self.list_commands(ctx):
            return None
        try:
            mod = importlib.import_module(f"graspdec.commands.{name}")
        except Exception as e:
            logger.error(f"Failed to import graspdec.commands.{name}")
            logger.exception(e)
            sys.exit(1)

        if not hasattr(mod, "cmd"):
            logger.error(f"Command module '{name}' must define a `cmd` object.")
            sys.exit(1)

        return mod.cmd


@click.command(cls=GraspdecCLI, invoke_without_command=True)
@click.option(
    "--log-level",
    default=None,
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    help="Override log level (also enables traceback for DEBUG or TRACE)",
)
@click.pass_context
def cli(ctx, log_level):
    """graspdec: EEG plan-to-grasp decoding (filter bank CSP + SVM) and protocol simulation."""

    def perform_setup():
        config.load()
        if not log_level:
            setup_logger(level=config.log_level)
        config.validate()

    level = (log_level or "WARNING").upper()
    setup_logger(level=level)

    ctx.ensure_object(dict)

    try:
        perform_setup()
    except ConfigError as e:
        logger.error(f"Error: {e}")
        ctx.exit(e.exit_code)
    except (KeyError, ValueError, TypeError) as e:
        logger.error(f"Error: {e}")
        ctx.exit(ConfigError.exit_code)

    ctx.obj["seed"] = config.seed
    ctx.obj["threads"] = config.threads
    ctx.obj["log_level"] = log_level.upper() if log_level else config.log_level

    logger.debug(f"config._raw_config: \n{json.dumps(config.config, indent=2, default=str)}")
    logger.debug(f"ctx.obj\n{json.dumps(ctx.obj, indent=2)}")

    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())

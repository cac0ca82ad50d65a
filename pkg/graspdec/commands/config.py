import click
import json

from graspdec.core.config import config as core_config
from graspdec.core.errors import ConfigError
from graspdec.core.utils import display_kv_table
from loguru import logger


@click.command("config")
@click.option('--as-json', is_flag=True, default=False, help='Show config properties as JSON')
@click.pass_context
def cmd(ctx, as_json):
    """
    Display current configuration properties.
    """
    try:
        core_config.load()
        props = core_config.list_properties()
    except ConfigError as e:
        logger.error(f"Failed to load configuration: {e}")
        ctx.exit(e.exit_code)

    if as_json:
        click.echo(json.dumps(props, indent=2, sort_keys=True, default=str))
    else:
        click.echo(f"Configuration from {core_config.config_dir}:")
        display_kv_table(props)

from contextlib import contextmanager

from loguru import logger

from graspdec.core.errors import GraspdecError, ValidationError, exit_code_for


@contextmanager
def exit_on_error(ctx):
    """Run a command body, turning failures into the documented exit codes."""
    try:
        yield
    except ValidationError as e:
        logger.error(f"{e}")
        for violation in e.violations:
            logger.error(f"  - {violation}")
        ctx.exit(e.exit_code)
    except GraspdecError as e:
        logger.error(f"{e}")
        ctx.exit(e.exit_code)
    except OSError as e:
        logger.error(f"I/O error: {e}")
        ctx.exit(exit_code_for(e))

import os
import sys

from loguru import logger

LOG_ENV_VAR = "FEDSIM_LOG"
DEFAULT_LEVEL = "INFO"


def configure_logging(level: str | None = None) -> str:
    """Install a single stderr sink. FEDSIM_LOG picks the level when none is given."""
    level = (level or os.environ.get(LOG_ENV_VAR) or DEFAULT_LEVEL).upper()
    logger.remove()
    logger.add(
        sys.stderr,
        level=level,
        format="{time:HH:mm:ss} | {level: <7} | {name}:{function} - {message}",
    )
    return level

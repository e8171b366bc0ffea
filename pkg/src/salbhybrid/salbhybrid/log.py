import logging
import os

from rich.console import Console
from rich.logging import RichHandler

# SALB_LOG=trace|info, anything else keeps warnings only
LEVELS = {
    "trace": logging.DEBUG,
    "debug": logging.DEBUG,
    "info": logging.INFO,
}

_configured = False


def setup_logging(level=None):
    """
    Installs a rich handler on the package logger. The level comes from the
    argument, then from SALB_LOG, then defaults to WARNING.
    """
    global _configured
    if level is None:
        level = os.environ.get("SALB_LOG", "")
    if isinstance(level, str):
        level = LEVELS.get(level.strip().lower(), logging.WARNING)
    root = logging.getLogger("salbhybrid")
    root.setLevel(level)
    if not _configured:
        handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        _configured = True
    return root


def trace_enabled(logger):
    return logger.isEnabledFor(logging.DEBUG)

"""
Logging setup for the command line and scripts
Library modules only call logging.getLogger(__name__); handlers are attached here.
"""

import logging
import os
from pathlib import Path
from typing import Optional, Union

from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULT_LEVEL = 'INFO'


def setup_logging(
    level: Optional[str] = None,
    log_file: Optional[Union[str, Path]] = None,
    console: Optional[Console] = None,
) -> logging.Logger:
    """
    Configure the root logger with a rich console handler

    Level comes from the argument, then FIE_BENCH_LOG_LEVEL, then INFO.
    An optional log file gets the plain timestamped format.
    """
    level_name = (level or os.getenv('FIE_BENCH_LOG_LEVEL') or DEFAULT_LEVEL).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level_name}")

    handlers = [
        RichHandler(console=console or Console(stderr=True), rich_tracebacks=True, show_path=False)
    ]
    if log_file is not None:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handlers.append(file_handler)

    logging.basicConfig(level=numeric, format='%(message)s', datefmt='[%X]', handlers=handlers, force=True)
    return logging.getLogger('fie_bench')

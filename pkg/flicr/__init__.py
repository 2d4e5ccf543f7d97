import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import List, Optional

__version__ = '1.0.0'

LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'


def setup_logging(verbosity: int = 0, log_dir: Optional[str] = None, log_to_file: Optional[bool] = None) -> logging.Logger:
    """Configure the `flicr` logger once: rotating file log plus stderr"""
    from flicr.utils.config_manager import config_manager

    logger = logging.getLogger('flicr')
    stderr_level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG

    if not logger.handlers:
        log_dir = log_dir or config_manager.get('LOG_DIR', 'logs')
        if log_to_file is None:
            log_to_file = config_manager.get('LOG_TO_FILE', True)

        if log_to_file:
            os.makedirs(log_dir, exist_ok=True)
            # delay=True avoids rotate failures on Windows
            file_handler = RotatingFileHandler(
                os.path.join(log_dir, 'flicr.log'),
                maxBytes=config_manager.get('MAX_LOG_SIZE', 1024 * 1024),
                backupCount=config_manager.get('LOG_BACKUP_COUNT', 5),
                delay=True,
            )
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            file_handler.setLevel(logging.INFO)
            logger.addHandler(file_handler)

        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
        logger.addHandler(stream_handler)

    for handler in logger.handlers:
        if type(handler) is logging.StreamHandler:
            handler.setLevel(stderr_level)
    logger.setLevel(min(logging.INFO, stderr_level))
    return logger


def create_cli():
    """Argument parser for the `encode|decode|metrics|sweep|inspect` subcommands"""
    from flicr.commands import build_parser

    return build_parser()


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_cli()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logger = setup_logging(args.verbose)
    logger.info(f"flicr {__version__}: {args.command}")
    return args.handler(args)

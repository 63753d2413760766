"""
Hardy space laboratory
Command-line entry point
"""

import logging
import sys
from typing import List, Optional

from app.cli.router import build_parser
from app.core.logging_config import setup_logging

logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse the command line, configure logging and run the selected command"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    logger.debug(f"Command {args.command} with {vars(args)}")
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())

"""
Entry point for the cloud scheduling simulator and MetaNet selector.
"""
import logging
import sys

from config import Config
from src.main import main as cli_main


def setup_logging():
    """Configure logging for the application."""
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stdout)]
    )


def main():
    setup_logging()
    sys.exit(cli_main())


if __name__ == '__main__':
    main()

"""
Process-level settings read from the environment.
"""
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Settings that are not part of an experiment config."""

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

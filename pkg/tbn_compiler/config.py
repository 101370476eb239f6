"""Configuration for the TBN compiler."""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from rich.console import Console
from rich.logging import RichHandler

from .errors import ConfigError

VARIABLES_PATH = Path(__file__).with_name("variables.yaml")


def load_variables(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load the packaged defaults file."""
    with open(path or VARIABLES_PATH, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


_VARIABLES = load_variables()


@dataclass
class Config:
    """Configuration for compiling, running and cross-checking plans."""

    # Size caps
    oracle_cap: int = _VARIABLES["caps"]["oracle_cap"]
    buffer_cap: int = _VARIABLES["caps"]["buffer_cap"]

    # Numerics
    tolerance: float = _VARIABLES["numerics"]["tolerance"]

    # Output
    output_format: str = _VARIABLES["output"]["format"]
    significant_digits: int = _VARIABLES["output"]["significant_digits"]

    # Logging
    log_level: str = _VARIABLES["logging"]["level"]
    log_format: str = _VARIABLES["logging"]["format"]

    @classmethod
    def from_env(cls) -> "Config":
        """Create configuration from environment variables.

        Optional environment variables:
        - TBN_ORACLE_CAP: largest oracle joint table (default: 2^24 entries)
        - TBN_BUFFER_CAP: largest plan buffer (default: 2^26 entries)
        - TBN_TOLERANCE: diff threshold (default: 1e-9)
        - TBN_OUTPUT_FORMAT: records or tsv (default: records)
        - TBN_LOG_LEVEL: logging level (default: WARNING)
        - TBN_LOG_FORMAT: logging format string

        Returns:
            Config object initialized from environment variables

        Raises:
            ConfigError: If a numeric variable cannot be parsed
        """
        defaults = cls()
        try:
            return cls(
                oracle_cap=int(os.getenv("TBN_ORACLE_CAP", defaults.oracle_cap)),
                buffer_cap=int(os.getenv("TBN_BUFFER_CAP", defaults.buffer_cap)),
                tolerance=float(os.getenv("TBN_TOLERANCE", defaults.tolerance)),
                output_format=os.getenv("TBN_OUTPUT_FORMAT", defaults.output_format),
                significant_digits=defaults.significant_digits,
                log_level=os.getenv("TBN_LOG_LEVEL", defaults.log_level),
                log_format=os.getenv("TBN_LOG_FORMAT", defaults.log_format),
            )
        except ValueError as e:
            raise ConfigError(f"Invalid numeric environment variable: {e}") from e

    def validate(self) -> None:
        """Validate the configuration.

        Raises:
            ConfigError: If the configuration is invalid
        """
        if self.oracle_cap <= 0:
            raise ConfigError("Oracle cap must be a positive entry count")
        if self.buffer_cap <= 0:
            raise ConfigError("Buffer cap must be a positive entry count")
        if not self.tolerance > 0:
            raise ConfigError("Tolerance must be positive")
        if self.output_format not in ("records", "tsv"):
            raise ConfigError(f"Unknown output format: {self.output_format}")
        if logging.getLevelName(self.log_level.upper()) == f"Level {self.log_level.upper()}":
            raise ConfigError(f"Unknown log level: {self.log_level}")


def configure_logging(config: Config) -> None:
    """Route package logging through a rich handler on stderr."""
    handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    handler.setFormatter(logging.Formatter(config.log_format))
    logger = logging.getLogger("tbn_compiler")
    logger.handlers[:] = [handler]
    logger.setLevel(config.log_level.upper())
    logger.propagate = False

import logging

import pytest

from tbn_compiler.config import Config, configure_logging, load_variables
from tbn_compiler.errors import ConfigError


def test_defaults_come_from_variables_file():
    variables = load_variables()
    config = Config()
    assert config.oracle_cap == variables["caps"]["oracle_cap"] == 2 ** 24
    assert config.buffer_cap == 2 ** 26
    assert config.tolerance == 1e-9
    assert config.output_format == "records"
    config.validate()


def test_from_env(monkeypatch):
    monkeypatch.setenv("TBN_ORACLE_CAP", "1024")
    monkeypatch.setenv("TBN_TOLERANCE", "1e-6")
    monkeypatch.setenv("TBN_OUTPUT_FORMAT", "tsv")
    config = Config.from_env()
    assert config.oracle_cap == 1024
    assert config.tolerance == 1e-6
    assert config.output_format == "tsv"


def test_from_env_bad_number(monkeypatch):
    monkeypatch.setenv("TBN_BUFFER_CAP", "lots")
    with pytest.raises(ConfigError):
        Config.from_env()


@pytest.mark.parametrize(
    "changes",
    [
        {"oracle_cap": 0},
        {"buffer_cap": -5},
        {"tolerance": 0.0},
        {"output_format": "xml"},
        {"log_level": "CHATTY"},
    ],
)
def test_validate_rejects(changes):
    with pytest.raises(ConfigError):
        Config(**changes).validate()


def test_configure_logging():
    configure_logging(Config(log_level="debug"))
    logger = logging.getLogger("tbn_compiler")
    assert logger.level == logging.DEBUG
    assert len(logger.handlers) == 1
    assert not logger.propagate

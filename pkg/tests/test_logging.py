"""Tests for the loguru sinks."""
import pytest
from loguru import logger

from utils.logging import setup_logging


@pytest.fixture(autouse=True)
def reset_logger():
    yield
    logger.remove()


def test_piped_console_output_has_no_colour_codes(capsys):
    setup_logging(log_dir=None, level="INFO")
    logger.info("fitted n={} genes", 5)
    captured = capsys.readouterr()
    assert "fitted n=5 genes" in captured.err
    assert "\x1b[" not in captured.err
    assert captured.out == ""


def test_file_sink_only_with_a_log_dir(tmp_path):
    setup_logging(log_dir=None, level="INFO")
    assert not (tmp_path / "mecal.log").exists()
    setup_logging(log_dir=str(tmp_path), level="INFO")
    logger.info("written")
    logger.complete()
    assert "written" in (tmp_path / "mecal.log").read_text()

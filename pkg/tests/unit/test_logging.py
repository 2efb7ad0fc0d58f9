# tests/unit/test_logging.py

import json
import logging

import numpy as np
import pytest

from advdenoise.utils.logging import LogContext, LogFormatter, setup_logging

@pytest.fixture
def record():
    return logging.LogRecord("advdenoise.training", logging.WARNING, __file__, 10,
                             "Discriminator accuracy below target", None, None)

class TestLogFormatter:
    def test_json_fields(self, record):
        """Test records render as one JSON object"""
        data = json.loads(LogFormatter().format(record))
        assert data["level"] == "WARNING"
        assert data["logger"] == "advdenoise.training"
        assert data["message"] == "Discriminator accuracy below target"

    def test_prefixed_extras_are_flattened(self, record):
        """Test advdenoise_ extras appear without their prefix"""
        record.advdenoise_iteration = 40
        record.advdenoise_disc_accuracy = 0.5
        record.unrelated = "hidden"
        data = json.loads(LogFormatter().format(record))
        assert data["iteration"] == 40
        assert data["disc_accuracy"] == 0.5
        assert "unrelated" not in data

    def test_non_finite_and_numpy_values(self, record):
        """Test NaN losses and numpy scalars still give strict JSON"""
        record.advdenoise_l_deno = float("nan")
        record.advdenoise_psnr = np.float32(28.5)
        record.advdenoise_losses = {"l_adv": float("inf")}
        data = json.loads(LogFormatter().format(record))
        assert data["l_deno"] == "nan"
        assert data["psnr"] == 28.5
        assert data["losses"] == {"l_adv": "inf"}

class TestLogContext:
    def test_fields_attach_inside_context_only(self, record):
        """Test context fields are added while the context is open"""
        logger = logging.getLogger("advdenoise.test_context")
        with LogContext(logger, phase="adversarial"):
            assert logger.filter(record)
            assert record.advdenoise_phase == "adversarial"
        assert not logger.filters

class TestSetupLogging:
    def test_file_handler(self, tmp_path):
        """Test a log directory gets a rotating JSON log file"""
        logger = setup_logging(str(tmp_path / "logs"), logging.INFO)
        try:
            logging.getLogger("advdenoise.pipeline").info("Finished phase", extra={'advdenoise_phase': 2})
            for handler in logger.handlers:
                handler.flush()
            files = list((tmp_path / "logs").glob("advdenoise_*.log"))
            assert len(files) == 1
            line = json.loads(files[0].read_text().splitlines()[-1])
            assert line["message"] == "Finished phase"
            assert line["phase"] == 2
        finally:
            for handler in logger.handlers:
                handler.close()
            logger.handlers = []

    def test_handlers_are_replaced(self):
        """Test repeated setup does not stack handlers"""
        setup_logging(log_level=logging.WARNING)
        logger = setup_logging(log_level=logging.WARNING)
        try:
            assert len(logger.handlers) == 1
            assert logger.level == logging.WARNING
        finally:
            logger.handlers = []

# advdenoise/utils/logging.py

import json
import logging
import logging.handlers
import math
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

FIELD_PREFIX = 'advdenoise_'
ROOT_LOGGER = 'advdenoise'

def _plain(value: Any) -> Any:
    """Maps numpy scalars and non-finite floats onto strict JSON values."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)  # 'nan', 'inf', '-inf'
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value

class LogFormatter(logging.Formatter):
    """One JSON object per record.

    Structured fields are passed as ``extra={'advdenoise_<name>': value}`` and
    appear under ``<name>``; losses that went NaN are written as strings so
    every line stays valid JSON.
    """

    def format(self, record):
        data: Dict[str, Any] = {
            'timestamp': self.formatTime(record),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'function': record.funcName,
            'line': record.lineno
        }

        for key, value in record.__dict__.items():
            if key.startswith(FIELD_PREFIX):
                data[key[len(FIELD_PREFIX):]] = _plain(value)

        if record.exc_info:
            data['exception'] = self.formatException(record.exc_info)

        return json.dumps(data, default=str, allow_nan=False)

def setup_logging(
    log_dir: Optional[str] = None,
    log_level: int = logging.INFO,
    max_size: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5
) -> logging.Logger:
    """Routes the ``advdenoise`` logger tree to stderr and, optionally, to a
    rotating file ``advdenoise_YYYYMMDD.log`` under ``log_dir``.

    Calling it again replaces the previous handlers.
    """
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(log_level)
    for handler in logger.handlers:
        handler.close()
    logger.handlers = []

    # stdout carries command results
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(LogFormatter())
    logger.addHandler(console)

    if log_dir:
        directory = Path(log_dir)
        directory.mkdir(parents=True, exist_ok=True)
        rotating = logging.handlers.RotatingFileHandler(
            directory / f"{ROOT_LOGGER}_{datetime.now():%Y%m%d}.log",
            maxBytes=max_size,
            backupCount=backup_count
        )
        rotating.setFormatter(LogFormatter())
        logger.addHandler(rotating)

    return logger

class _FieldFilter(logging.Filter):
    def __init__(self, fields: Dict[str, Any]):
        super().__init__()
        self.fields = fields

    def filter(self, record):
        for key, value in self.fields.items():
            setattr(record, FIELD_PREFIX + key, value)
        return True

class LogContext:
    """Tags every record emitted through ``logger`` inside the block, e.g.
    with the training phase."""

    def __init__(self, logger: logging.Logger, **fields):
        self.logger = logger
        self._filter = _FieldFilter(fields)

    def __enter__(self):
        self.logger.addFilter(self._filter)
        return self.logger

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.logger.removeFilter(self._filter)

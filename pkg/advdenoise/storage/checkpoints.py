# advdenoise/storage/checkpoints.py
"""The ADVD checkpoint container.

Layout (little-endian)::

    magic  b"ADVD"
    u16    format version
    4s     kind, b"DENO" or b"DISC"
    u32    header length, then a UTF-8 JSON header (sorted keys)
    u32    parameter count, then per parameter in declaration order:
           u16 name length, name, u8 ndim, ndim x u32 dims, float32 data

Decoding never yields a partially initialised model: every record is read
and checked before the model is built.
"""

import json
import logging
import os
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from advdenoise.models.denoiser import (
    DenoiserModel, LpRegularizer, MultiScaleConfig, SkipMode, build_denoiser,
)
from advdenoise.models.discriminator import Discriminator, DiscriminatorConfig, build_discriminator
from advdenoise.utils.errors import (
    CheckpointFormatError, CheckpointShapeError,
    CheckpointTruncatedError, CheckpointVersionError, ConfigError, StorageError,
)

logger = logging.getLogger(__name__)

MAGIC = b"ADVD"
FORMAT_VERSION = 1
KIND_DENOISER = b"DENO"
KIND_DISCRIMINATOR = b"DISC"

PathLike = Union[str, Path]

def _encode(kind: bytes, header: Dict[str, Any], params: Dict[str, np.ndarray]) -> bytes:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION), kind,
             struct.pack("<I", len(header_bytes)), header_bytes,
             struct.pack("<I", len(params))]
    for name, data in params.items():
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return b"".join(parts)

class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.blob):
            raise CheckpointTruncatedError(
                f"{self.path}: file ends inside {what} (offset {self.offset}, need {count} bytes)"
            )
        chunk = self.blob[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

def _decode(blob: bytes, path: str, expected_kind: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    reader = _Reader(blob, path)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointFormatError(f"{path}: not an ADVD checkpoint")
    (version,) = reader.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    kind = reader.take(4, "kind")
    if kind != expected_kind:
        raise CheckpointFormatError(
            f"{path}: checkpoint holds {kind.decode('ascii', 'replace')!r}, "
            f"expected {expected_kind.decode('ascii')!r}"
        )
    (header_length,) = reader.unpack("<I", "header length")
    try:
        header = json.loads(reader.take(header_length, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{path}: corrupt header ({e})") from e

    (count,) = reader.unpack("<I", "parameter count")
    params: Dict[str, np.ndarray] = {}
    for index in range(count):
        (name_length,) = reader.unpack("<H", f"parameter {index} name length")
        name = reader.take(name_length, f"parameter {index} name").decode("utf-8", "replace")
        (ndim,) = reader.unpack("<B", f"{name} rank")
        dims = reader.unpack(f"<{ndim}I", f"{name} shape")
        size = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(reader.take(4 * size, f"{name} data"), dtype="<f4")
        params[name] = data.reshape(dims).astype(np.float32)
    if reader.offset != len(blob):
        raise CheckpointFormatError(f"{path}: {len(blob) - reader.offset} unexpected trailing bytes")
    return header, params

def _read(path: PathLike) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise StorageError(f"Cannot read checkpoint {path}: {e}")

def _write(path: PathLike, blob: bytes) -> None:
    directory = os.path.dirname(str(path))
    tmp = f"{path}.tmp"
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except OSError as e:
        raise StorageError(f"Cannot write checkpoint {path}: {e}")

def _assign(path: str, named, stored: Dict[str, np.ndarray]) -> None:
    expected = {name: param.shape for name, param in named.items()}
    if list(expected) != list(stored):
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        raise CheckpointShapeError(
            f"{path}: parameters do not match the architecture (missing {missing}, unexpected {extra})"
        )
    for name, data in stored.items():
        if data.shape != expected[name]:
            raise CheckpointShapeError(f"{path}: {name} has shape {data.shape}, expected {expected[name]}")
    for name, param in named.items():
        param.data = stored[name].astype(param.dtype)
        param.grad = None

def save_checkpoint(model: DenoiserModel, path: PathLike) -> None:
    """Writes the denoiser's architecture, mode and parameters."""
    header = {
        "config": model.config.to_dict(),
        "skip_mode": model.skip_mode.value,
        "dropout_after_features": model.dropout_after_features,
        "regularizer": asdict(model.regularizer),
        "metadata": model.metadata,
    }
    params = {name: p.data for name, p in model.named_parameters().items()}
    _write(path, _encode(KIND_DENOISER, header, params))
    logger.info("Saved denoiser checkpoint", extra={'advdenoise_path': str(path)})

def load_checkpoint(path: PathLike) -> DenoiserModel:
    header, params = _decode(_read(path), str(path), KIND_DENOISER)
    try:
        cfg = MultiScaleConfig.from_dict(header["config"])
        skip_mode = SkipMode(header["skip_mode"])
        regularizer = LpRegularizer(**header["regularizer"])
        dropout_after_features = header["dropout_after_features"]
        metadata = header.get("metadata", {})
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"{path}: incomplete header ({e})") from e
    try:
        model = build_denoiser(cfg, regularizer=regularizer)
    except ConfigError as e:
        raise CheckpointShapeError(f"{path}: stored architecture is invalid ({e})") from e
    _assign(str(path), model.named_parameters(), params)
    model.skip_mode = skip_mode
    model.dropout_after_features = dropout_after_features
    model.metadata = metadata
    return model

def save_discriminator(d: Discriminator, path: PathLike) -> None:
    header = {"config": d.config.to_dict(), "metadata": d.metadata}
    params = {name: p.data for name, p in d.named_parameters().items()}
    _write(path, _encode(KIND_DISCRIMINATOR, header, params))
    logger.info("Saved discriminator checkpoint", extra={'advdenoise_path': str(path)})

def load_discriminator(path: PathLike) -> Discriminator:
    header, params = _decode(_read(path), str(path), KIND_DISCRIMINATOR)
    try:
        cfg = DiscriminatorConfig.from_dict(header["config"])
        metadata = header.get("metadata", {})
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"{path}: incomplete header ({e})") from e
    d = build_discriminator(cfg)
    _assign(str(path), d.named_parameters(), params)
    d.metadata = metadata
    return d

class CheckpointStore:
    """Named checkpoints inside one run directory."""

    EXTENSION = ".advd"

    def __init__(self, root: PathLike):
        self.root = Path(root)

    def path_for(self, name: str) -> Path:
        return self.root / f"{name}{self.EXTENSION}"

    def exists(self, name: str) -> bool:
        return self.path_for(name).is_file()

    def store(self, name: str, model: Union[DenoiserModel, Discriminator]) -> Path:
        path = self.path_for(name)
        if isinstance(model, Discriminator):
            save_discriminator(model, path)
        else:
            save_checkpoint(model, path)
        return path

    def retrieve(self, name: str) -> DenoiserModel:
        return load_checkpoint(self.path_for(name))

    def retrieve_discriminator(self, name: str) -> Discriminator:
        return load_discriminator(self.path_for(name))

    def names(self) -> List[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.stem for p in self.root.glob(f"*{self.EXTENSION}"))

    def delete(self, name: str) -> bool:
        path = self.path_for(name)
        if not path.exists():
            return False
        path.unlink()
        return True

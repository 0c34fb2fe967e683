"""
Model file layout (little-endian):

    b"GTNM" | u16 version | u64 body length | body | u32 CRC-32

body = u32 header length | header (canonical JSON) | counts (int64) | thresholds (float64)
The CRC covers every byte before it.
"""

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path
from typing import Union

import numpy as np
from loguru import logger

from ..domain.common import GridConfig, Roi
from .common import CorruptChecksumError, ModelFileError, ModelIOError, VersionMismatchError
from .model import NormalcyModel

__all__ = ("save_model", "load_model", "model_to_bytes", "model_from_bytes", "MODEL_VERSION")

MAGIC = b"GTNM"
MODEL_VERSION = 1
PREAMBLE = struct.Struct("<4sHQ")
CRC = struct.Struct("<I")
HEADER_LENGTH = struct.Struct("<I")


def model_to_bytes(model: NormalcyModel) -> bytes:
    header = json.dumps(
        {
            "roi": asdict(model.roi),
            "grid": asdict(model.grid),
            "alpha": model.alpha,
            "q": model.q,
            "min_cell_count": model.min_cell_count,
            "epsilon_nfa": model.epsilon_nfa,
            "counts_shape": list(model.counts.shape),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = b"".join(
        [
            HEADER_LENGTH.pack(len(header)),
            header,
            model.counts.astype("<i8").tobytes(),
            model.thresholds.astype("<f8").tobytes(),
        ]
    )
    framed = PREAMBLE.pack(MAGIC, MODEL_VERSION, len(body)) + body
    return framed + CRC.pack(zlib.crc32(framed))


def model_from_bytes(data: bytes) -> NormalcyModel:
    if len(data) < PREAMBLE.size + CRC.size:
        raise CorruptChecksumError(f"model file is truncated ({len(data)} bytes)")

    magic, version, body_length = PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise ModelFileError(f"not a model file (magic {magic!r})")
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"model file version {version}, expected {MODEL_VERSION}")

    end = PREAMBLE.size + body_length
    if len(data) != end + CRC.size:
        raise CorruptChecksumError(f"model file holds {len(data)} bytes, header announces {end + CRC.size}")
    (stored_crc,) = CRC.unpack_from(data, end)
    if zlib.crc32(data[:end]) != stored_crc:
        raise CorruptChecksumError("model file CRC mismatch")

    body = memoryview(data)[PREAMBLE.size : end]
    (header_length,) = HEADER_LENGTH.unpack_from(body)
    offset = HEADER_LENGTH.size
    try:
        header = json.loads(bytes(body[offset : offset + header_length]).decode("utf-8"))
        offset += header_length
        shape = tuple(header["counts_shape"])
        n_counts = int(np.prod(shape))
        counts = np.frombuffer(body, dtype="<i8", count=n_counts, offset=offset).reshape(shape)
        offset += counts.nbytes
        thresholds = np.frombuffer(body, dtype="<f8", count=shape[0] * shape[1], offset=offset)
        return NormalcyModel(
            roi=Roi(**header["roi"]),
            grid=GridConfig(**header["grid"]),
            counts=counts.astype(np.int64),
            thresholds=thresholds.reshape(shape[:2]).astype(np.float64),
            alpha=header["alpha"],
            q=header["q"],
            min_cell_count=header["min_cell_count"],
            epsilon_nfa=header["epsilon_nfa"],
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f"model body does not decode: {e}")


def save_model(model: NormalcyModel, path: Union[str, Path]):
    data = model_to_bytes(model)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise ModelIOError(f"cannot write {path}: {e}")
    logger.info(f"Saved normalcy model ({len(data)} bytes) to {path}.")


def load_model(path: Union[str, Path]) -> NormalcyModel:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise ModelIOError(f"cannot read {path}: {e}")
    model = model_from_bytes(data)
    logger.info(f"Loaded normalcy model from {path}: {model.n_validated_cells} validated cells.")
    return model

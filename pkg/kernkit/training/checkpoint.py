"""
Binary checkpoint format shared by the encoder and both kerning models.

Layout (little-endian)::

    b"KERN1"
    u32 tensor count
    per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims..., u8 dtype tag
    all payloads, row-major, in header order
    u32 JSON length, UTF-8 JSON {config, best_val_loss, epoch, kind}
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from kernkit.errors import BadMagicError, CheckpointError, TruncatedPayloadError, UnknownDtypeError
from kernkit.numerics.params import ParameterStore
from kernkit.storage import read_bytes, write_bytes_atomic

logger = logging.getLogger(__name__)

MAGIC = b"KERN1"
DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
TAG_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    """Parameters plus the run metadata needed to rebuild the model."""

    params: ParameterStore
    kind: str
    config: Dict[str, Any] = field(default_factory=dict)
    best_val_loss: float = float("nan")
    epoch: int = 0


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = [MAGIC, struct.pack("<I", len(ckpt.params))]
    payloads: List[bytes] = []
    for name, value in ckpt.params.items():
        tag = TAG_FOR_DTYPE.get(np.dtype(value.dtype))
        if tag is None:
            raise UnknownDtypeError(f"cannot store dtype {value.dtype} of '{name}'")
        encoded = name.encode("utf-8")
        header.append(struct.pack("<I", len(encoded)))
        header.append(encoded)
        header.append(struct.pack("<I", value.ndim))
        header.append(struct.pack(f"<{value.ndim}I", *value.shape))
        header.append(struct.pack("<B", tag))
        payloads.append(np.ascontiguousarray(value, dtype=DTYPE_TAGS[tag]).tobytes())
    # NaN is not valid JSON, store a missing loss as null
    best = ckpt.best_val_loss if np.isfinite(ckpt.best_val_loss) else None
    tail = json.dumps(
        {"config": ckpt.config, "best_val_loss": best, "epoch": ckpt.epoch, "kind": ckpt.kind},
        sort_keys=True,
    ).encode("utf-8")
    return b"".join(header) + b"".join(payloads) + struct.pack("<I", len(tail)) + tail


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise TruncatedPayloadError(
                f"truncated payload: need {count} bytes for {what} at offset {self.offset}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Parse checkpoint bytes; nothing is returned unless the whole file decodes.

    Raises:
        BadMagicError: If the file does not start with KERN1
        TruncatedPayloadError: If the file ends early
        UnknownDtypeError: If a dtype tag is not 0 or 1
    """
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, found {data[:len(MAGIC)]!r}")
    reader = _Reader(data)
    reader.take(len(MAGIC), "magic")
    count = reader.u32("tensor count")
    headers: List[Tuple[str, Tuple[int, ...], np.dtype]] = []
    for index in range(count):
        name = reader.take(reader.u32(f"name length of tensor {index}"), f"name of tensor {index}")
        rank = reader.u32(f"rank of tensor {index}")
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank, f"dims of tensor {index}"))
        tag = reader.take(1, f"dtype of tensor {index}")[0]
        if tag not in DTYPE_TAGS:
            raise UnknownDtypeError(f"unknown dtype tag {tag} for tensor {index}")
        headers.append((name.decode("utf-8"), tuple(dims), DTYPE_TAGS[tag]))

    arrays: Dict[str, np.ndarray] = {}
    for name, dims, dtype in headers:
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        raw = reader.take(size, f"payload of '{name}'")
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))

    tail_raw = reader.take(reader.u32("config length"), "config")
    try:
        tail = json.loads(tail_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"invalid checkpoint metadata: {e}") from None
    if reader.offset != len(data):
        logger.warning(f"{len(data) - reader.offset} trailing bytes after checkpoint metadata")

    best = tail.get("best_val_loss")
    return Checkpoint(
        params=ParameterStore(arrays),
        kind=str(tail.get("kind", "")),
        config=tail.get("config") or {},
        best_val_loss=float("nan") if best is None else float(best),
        epoch=int(tail.get("epoch", 0)),
    )


def save_checkpoint(ckpt: Checkpoint, path: PathLike) -> None:
    write_bytes_atomic(path, encode_checkpoint(ckpt))
    logger.info(f"Saved {ckpt.kind} checkpoint with {ckpt.params.num_scalars} scalars to {path}")


def load_checkpoint(path: PathLike) -> Checkpoint:
    ckpt = decode_checkpoint(read_bytes(path))
    logger.debug(f"Loaded {ckpt.kind} checkpoint from {path}")
    return ckpt


def is_checkpoint(path: PathLike) -> bool:
    try:
        with open(path, "rb") as f:
            return f.read(len(MAGIC)) == MAGIC
    except OSError:
        return False

"""
Binary PGM (P5) reading and writing.
"""
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from kernkit.errors import DataValidationError
from kernkit.storage import read_bytes, write_bytes_atomic

logger = logging.getLogger(__name__)


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode an 8-bit (height, width) array as P5 with maxval 255."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise DataValidationError(f"PGM needs a 2-D array, got shape {pixels.shape}")
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def _next_token(payload: bytes, pos: int) -> Tuple[bytes, int]:
    while pos < len(payload):
        if payload[pos:pos + 1] == b"#":
            while pos < len(payload) and payload[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif payload[pos:pos + 1] in (b" ", b"\t", b"\r", b"\n"):
            pos += 1
        else:
            break
    start = pos
    while pos < len(payload) and payload[pos:pos + 1] not in (b" ", b"\t", b"\r", b"\n", b"#"):
        pos += 1
    return payload[start:pos], pos


def decode_pgm(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    """
    Decode a P5 image into a uint8 (height, width) array.

    Images with maxval below 255 are rescaled to the 0..255 range.
    """
    magic, pos = _next_token(payload, 0)
    if magic != b"P5":
        raise DataValidationError(f"{source}: not a binary PGM (magic {magic!r})")
    try:
        width_tok, pos = _next_token(payload, pos)
        height_tok, pos = _next_token(payload, pos)
        maxval_tok, pos = _next_token(payload, pos)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError:
        raise DataValidationError(f"{source}: malformed PGM header") from None
    if not 0 < maxval < 256:
        raise DataValidationError(f"{source}: unsupported maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    expected = width * height
    raster = payload[pos:pos + expected]
    if len(raster) != expected:
        raise DataValidationError(f"{source}: expected {expected} pixel bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    if maxval != 255:
        pixels = (pixels.astype(np.uint16) * 255 // maxval).astype(np.uint8)
    return pixels


def write_pgm(pixels: np.ndarray, path: Union[str, Path]) -> None:
    write_bytes_atomic(path, encode_pgm(pixels))


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    return decode_pgm(read_bytes(path), source=str(path))

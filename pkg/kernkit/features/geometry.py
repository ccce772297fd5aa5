"""
Per-glyph geometry: centre of gravity, row extents, peripheral feature.
"""
from typing import Tuple

import numpy as np

from kernkit.dataset.records import GlyphImage
from kernkit.errors import EmptyGlyphError


def _require_ink(glyph: GlyphImage) -> None:
    if not glyph.has_ink:
        raise EmptyGlyphError(f"glyph of category {glyph.category} has no ink")


def center_of_gravity(glyph: GlyphImage) -> float:
    """Mean column index over ink pixels."""
    _require_ink(glyph)
    cols = np.nonzero(glyph.pixels)[1]
    return float(cols.mean(dtype=np.float64))


def row_extents(pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Leftmost and rightmost ink column of every row.

    Returns:
        (inked, left, right): boolean row mask and int column arrays; rows
        without ink hold left = width and right = -1
    """
    pixels = np.asarray(pixels, dtype=bool)
    width = pixels.shape[1]
    inked = pixels.any(axis=1)
    left = np.where(inked, pixels.argmax(axis=1), width)
    right = np.where(inked, width - 1 - pixels[:, ::-1].argmax(axis=1), -1)
    return inked, left, right


def ink_width(glyph: GlyphImage) -> int:
    """Width of the glyph's ink bounding box."""
    _require_ink(glyph)
    cols = np.nonzero(glyph.pixels.any(axis=0))[0]
    return int(cols[-1] - cols[0] + 1)


def peripheral_feature(glyph: GlyphImage) -> np.ndarray:
    """
    Left and right blank distances at every row, normalised by H.

    Entry y is the leftmost ink column of row y; entry H + y is the distance
    from the rightmost ink column to the right edge. Empty rows hold the
    sentinel H (1.0 after normalisation).
    """
    size = glyph.size
    inked, left, right = row_extents(glyph.pixels)
    left_dist = np.where(inked, left, size)
    right_dist = np.where(inked, (size - 1) - right, size)
    return np.concatenate([left_dist, right_dist]).astype(np.float64) / size

"""
Builders for glyphs and font records used across the test suite.
"""
from typing import Optional, Sequence

import numpy as np

from kernkit.dataset.records import FontRecord, GlyphImage, KerningTable, baseline_row_for
from kernkit.schemas import FontStyle


def glyph(pixels, category: int = 0) -> GlyphImage:
    pixels = np.asarray(pixels, dtype=bool)
    return GlyphImage(category=category, pixels=pixels, baseline_row=baseline_row_for(pixels.shape[0]))


def bar_glyph(size: int, column: int, width: int = 1, category: int = 0,
              rows: Optional[slice] = None) -> GlyphImage:
    """Vertical bar of ``width`` columns starting at ``column`` (full height unless ``rows``)."""
    pixels = np.zeros((size, size), dtype=bool)
    pixels[rows if rows is not None else slice(None), column:column + width] = True
    return glyph(pixels, category)


def random_pixels(rng: np.random.Generator, size: int = 32, density: float = 0.3) -> np.ndarray:
    pixels = rng.random((size, size)) < density
    if not pixels.any():
        pixels[size // 2, size // 2] = True
    return pixels


def random_glyph(rng: np.random.Generator, size: int = 32, density: float = 0.3, category: int = 0) -> GlyphImage:
    return glyph(random_pixels(rng, size, density), category)


def blob_glyph(rng: np.random.Generator, size: int = 32, category: int = 0) -> GlyphImage:
    """Random solid rectangle, so every inked row is a single run."""
    top = int(rng.integers(0, size // 2))
    bottom = int(rng.integers(top + 1, size))
    left = int(rng.integers(0, size // 2))
    right = int(rng.integers(left + 1, size))
    pixels = np.zeros((size, size), dtype=bool)
    pixels[top:bottom, left:right] = True
    return glyph(pixels, category)


def make_font(font_id: str, table, glyphs: Optional[Sequence[GlyphImage]] = None,
              style: FontStyle = FontStyle.SYNTHETIC, family_id: Optional[str] = None,
              size: int = 32, seed: int = 0) -> FontRecord:
    """Font record with the given table; random glyphs unless ``glyphs`` is given."""
    values = np.asarray(table, dtype=np.float64)
    n = values.shape[0]
    if glyphs is None:
        rng = np.random.default_rng(seed)
        glyphs = [random_glyph(rng, size, category=k) for k in range(n)]
    return FontRecord(
        font_id=font_id,
        family_id=family_id or f"family-{font_id}",
        style=style,
        glyphs=tuple(glyphs),
        table=KerningTable(values),
    )

"""
Word previews: glyphs composed at given COG-to-COG spaces.

Canvases are 8-bit grayscale with ink = 0 on a white (255) background.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from kernkit.dataset import pgm
from kernkit.dataset.records import GlyphImage
from kernkit.errors import DataValidationError, EmptyGlyphError
from kernkit.features.geometry import center_of_gravity
from kernkit.storage import write_bytes_atomic

logger = logging.getLogger(__name__)

MARGIN = 8
BACKGROUND = 255
INK = 0
ROW_SEPARATION = 4

PathLike = Union[str, Path]


@dataclass
class Composite:
    """A rendered canvas and the horizontal offset applied to each glyph frame."""

    width: int
    height: int
    pixels: np.ndarray
    placements: List[int] = field(default_factory=list)


def _round_half_up(value: float) -> int:
    # shift-invariant under integer offsets, unlike round-half-to-even
    return int(math.floor(value + 0.5))


def glyph_offsets(glyphs: Sequence[GlyphImage], spaces: Sequence[float]) -> List[int]:
    """
    Integer frame offsets (first glyph at 0) realising ``spaces`` between COGs.

    Each glyph is rounded against the previous glyph's actual position, so
    every realised space is within 0.5 px of the request.
    """
    if len(spaces) != len(glyphs) - 1:
        raise DataValidationError(f"{len(glyphs)} glyphs need {len(glyphs) - 1} spaces, got {len(spaces)}")
    for glyph in glyphs:
        if not glyph.has_ink:
            raise EmptyGlyphError(f"glyph of category {glyph.category} has no ink")
    cogs = [center_of_gravity(glyph) for glyph in glyphs]
    offsets = [0]
    for k in range(1, len(glyphs)):
        previous = offsets[-1] + cogs[k - 1]
        offsets.append(_round_half_up(previous + float(spaces[k - 1]) - cogs[k]))
    return offsets


def compose_word(glyphs: Sequence[GlyphImage], spaces: Sequence[float], margin: int = MARGIN) -> Composite:
    """
    Place glyphs left to right at the requested COG distances.

    Overlapping ink is merged (ink wins). The canvas is cropped to the ink
    plus ``margin`` on both sides and baselines are aligned.

    Raises:
        EmptyGlyphError: If a glyph has no ink
    """
    if not glyphs:
        raise DataValidationError("compose_word needs at least one glyph")
    offsets = glyph_offsets(glyphs, spaces)
    top_baseline = max(glyph.baseline_row for glyph in glyphs)
    lefts, rights = [], []
    for glyph, offset in zip(glyphs, offsets):
        cols = np.nonzero(glyph.pixels.any(axis=0))[0]
        lefts.append(offset + int(cols[0]))
        rights.append(offset + int(cols[-1]))
    shift = margin - min(lefts)
    width = max(rights) - min(lefts) + 1 + 2 * margin
    height = max(top_baseline - g.baseline_row + g.size for g in glyphs)

    ink = np.zeros((height, width), dtype=bool)
    placements = []
    for glyph, offset in zip(glyphs, offsets):
        x0 = offset + shift
        y0 = top_baseline - glyph.baseline_row
        rows, cols = np.nonzero(glyph.pixels)
        ink[rows + y0, cols + x0] = True
        placements.append(x0)
    pixels = np.where(ink, INK, BACKGROUND).astype(np.uint8)
    return Composite(width=width, height=height, pixels=pixels, placements=placements)


def stack_rows(rows: Sequence[Composite], separation: int = ROW_SEPARATION) -> Composite:
    """Stack composites vertically, left-aligned, on a white canvas."""
    width = max(row.width for row in rows)
    height = sum(row.height for row in rows) + separation * (len(rows) - 1)
    pixels = np.full((height, width), BACKGROUND, dtype=np.uint8)
    y = 0
    for row in rows:
        pixels[y:y + row.height, :row.width] = row.pixels
        y += row.height + separation
    return Composite(width=width, height=height, pixels=pixels, placements=list(rows[0].placements))


@dataclass
class Comparison:
    """Ground-truth row, estimated row, their stacked canvas and per-gap errors."""

    reference: Composite
    estimate: Composite
    stacked: Composite
    gaps: pd.DataFrame


def compose_comparison(glyphs: Sequence[GlyphImage], gt_spaces: Sequence[float],
                       est_spaces: Sequence[float]) -> Comparison:
    """
    Two rows (ground truth above, estimate below) plus a gap table.

    The gap table has columns gap, gt, est, signed_error (= est - gt).
    """
    if len(gt_spaces) != len(est_spaces):
        raise DataValidationError(
            f"ground-truth and estimated spaces differ in length: {len(gt_spaces)} vs {len(est_spaces)}"
        )
    reference = compose_word(glyphs, gt_spaces)
    estimate = compose_word(glyphs, est_spaces)
    gaps = pd.DataFrame({
        "gap": np.arange(len(gt_spaces), dtype=np.int64),
        "gt": np.asarray(gt_spaces, dtype=np.float64),
        "est": np.asarray(est_spaces, dtype=np.float64),
    })
    gaps["signed_error"] = gaps["est"] - gaps["gt"]
    return Comparison(reference, estimate, stack_rows([reference, estimate]), gaps)


def compose_offset_examples(glyphs: Sequence[GlyphImage], gt_spaces: Sequence[float], ae: float) -> Composite:
    """Rows at ground truth minus ``ae``, at ground truth, and plus ``ae``, to show what an AE looks like."""
    rows = [compose_word(glyphs, [s + sign * ae for s in gt_spaces]) for sign in (-1.0, 0.0, 1.0)]
    return stack_rows(rows)


def write_pgm(composite: Composite, path: PathLike) -> None:
    pgm.write_pgm(composite.pixels, path)


def write_gap_csv(comparison: Comparison, path: PathLike) -> None:
    text = comparison.gaps.to_csv(index=False, float_format="%.3f", lineterminator="\n")
    write_bytes_atomic(path, text.encode("utf-8"))


def word_categories(word: str, labels: Sequence[str]) -> List[int]:
    """Category index of every letter of ``word``."""
    index = {label: k for k, label in enumerate(labels)}
    missing = [ch for ch in word if ch not in index]
    if missing:
        raise DataValidationError(f"word '{word}' uses letters without glyphs: {''.join(missing)}")
    return [index[ch] for ch in word]


def spaces_for_word(table: np.ndarray, categories: Sequence[int]) -> List[float]:
    return [float(table[a, b]) for a, b in zip(categories[:-1], categories[1:])]


def word_glyphs(glyphs: Sequence[GlyphImage], table: np.ndarray, word: str,
                labels: Sequence[str]) -> Tuple[List[GlyphImage], List[float]]:
    """Glyph sequence and table spaces for ``word``."""
    categories = word_categories(word, labels)
    return [glyphs[c] for c in categories], spaces_for_word(table, categories)

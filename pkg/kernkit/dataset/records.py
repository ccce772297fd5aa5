"""
Font records: glyph rasters plus the ground-truth kerning table.

On-disk layout of one record directory::

    meta.json          {font_id, family_id, style, categories, ink_value, baseline_row, ...}
    kerning.json       n x n nested arrays, row = first letter, column = second letter
    glyphs/<label>.pgm binary P5, one byte per pixel, ink_value (0) marks ink
"""
import logging
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from kernkit.dataset.pgm import read_pgm, write_pgm
from kernkit.errors import DataValidationError, EmptyGlyphError, MissingGlyphError, ShapeError
from kernkit.schemas import SUPPORTED_IMAGE_SIZES, FontStyle
from kernkit.storage import load_json, save_json

logger = logging.getLogger(__name__)

BINARIZE_THRESHOLD = 128
LATIN_LABELS: Tuple[str, ...] = tuple(string.ascii_uppercase + string.ascii_lowercase)

PathLike = Union[str, Path]


def default_labels(n: int) -> Tuple[str, ...]:
    """A..Z a..z for 52 categories, 0..n-1 otherwise."""
    if n == len(LATIN_LABELS):
        return LATIN_LABELS
    return tuple(str(i) for i in range(n))


def baseline_row_for(size: int) -> int:
    """Baseline row counted from the top: 96/256 of the height above the bottom."""
    return int(round(size * 160 / 256))


@dataclass(frozen=True, eq=False)
class GlyphImage:
    """One binary raster of one letter (True = ink)."""

    category: int
    pixels: np.ndarray
    baseline_row: int

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=bool)
        if pixels.ndim != 2 or pixels.shape[0] != pixels.shape[1]:
            raise ShapeError(f"glyph raster must be square, got shape {pixels.shape}")
        if pixels.shape[0] not in SUPPORTED_IMAGE_SIZES:
            raise ShapeError(f"glyph size {pixels.shape[0]} not in {SUPPORTED_IMAGE_SIZES}")
        object.__setattr__(self, "pixels", pixels)

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    @property
    def has_ink(self) -> bool:
        return bool(self.pixels.any())


@dataclass(frozen=True, eq=False)
class KerningTable:
    """n x n letter spaces in pixels; row = first letter, column = second letter."""

    values: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ShapeError(f"kerning table must be n x n, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataValidationError("kerning table holds non-finite entries")
        labels = tuple(self.labels) or default_labels(values.shape[0])
        if len(labels) != values.shape[0]:
            raise ShapeError(f"kerning table of shape {values.shape} has {len(labels)} labels")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def space(self, first: int, second: int) -> float:
        return float(self.values[first, second])


@dataclass(frozen=True, eq=False)
class FontRecord:
    """A font's glyphs (one per category, in category order) and its ground truth."""

    font_id: str
    family_id: str
    style: FontStyle
    glyphs: Tuple[GlyphImage, ...]
    table: Optional[KerningTable]
    labels: Tuple[str, ...] = ()
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        glyphs = tuple(self.glyphs)
        labels = tuple(self.labels) or default_labels(len(glyphs))
        if len(labels) != len(glyphs):
            raise ShapeError(f"font {self.font_id}: {len(glyphs)} glyphs but {len(labels)} labels")
        sizes = {g.size for g in glyphs}
        if len(sizes) > 1:
            raise ShapeError(f"font {self.font_id}: mixed glyph sizes {sorted(sizes)}")
        for index, glyph in enumerate(glyphs):
            if glyph.category != index:
                raise DataValidationError(
                    f"font {self.font_id}: glyph at position {index} has category {glyph.category}"
                )
            if not glyph.has_ink:
                raise EmptyGlyphError(f"font {self.font_id}: glyph {labels[index]} has no ink")
        if self.table is not None and self.table.n != len(glyphs):
            raise ShapeError(
                f"font {self.font_id}: kerning table is {self.table.n}x{self.table.n} "
                f"but there are {len(glyphs)} glyphs"
            )
        object.__setattr__(self, "glyphs", glyphs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "style", FontStyle(self.style))

    @property
    def n(self) -> int:
        return len(self.glyphs)

    @property
    def image_size(self) -> int:
        return self.glyphs[0].size

    def require_table(self) -> KerningTable:
        if self.table is None:
            raise DataValidationError(f"font {self.font_id} has no kerning table")
        return self.table


def table_from_nested(data: Any, labels: Sequence[str] = (), source: str = "kerning table") -> KerningTable:
    """Validate nested lists as an n x n table."""
    if not isinstance(data, list) or not all(isinstance(row, list) for row in data):
        raise ShapeError(f"{source} must be a list of rows")
    rows = len(data)
    widths = sorted({len(row) for row in data})
    if rows == 0 or widths != [rows]:
        cols = widths[0] if len(widths) == 1 else widths
        raise ShapeError(f"{source} has shape {rows}x{cols}, expected {rows}x{rows}")
    try:
        values = np.array(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise DataValidationError(f"{source} holds non-numeric entries") from None
    return KerningTable(values, tuple(labels))


def load_kerning_table(path: PathLike, labels: Sequence[str] = ()) -> KerningTable:
    table = table_from_nested(load_json(path), labels, source=str(path))
    if labels and table.n != len(labels):
        raise ShapeError(f"{path} is {table.n}x{table.n}, expected {len(labels)}x{len(labels)}")
    return table


def save_kerning_table(table: KerningTable, path: PathLike) -> None:
    # json writes floats with shortest round-trip repr, so values reload exactly
    save_json(path, [[float(v) for v in row] for row in table.values])


def _binarize(raw: np.ndarray, ink_value: int) -> np.ndarray:
    if ink_value < BINARIZE_THRESHOLD:
        return raw < BINARIZE_THRESHOLD
    return raw >= BINARIZE_THRESHOLD


def _parse_style(value: Any) -> FontStyle:
    # fonts without a known style tag are kept and grouped as Unknown
    try:
        return FontStyle(value)
    except ValueError:
        if value is not None:
            logger.warning(f"Unrecognised style tag '{value}', using Unknown")
        return FontStyle.UNKNOWN


def load_font_record(directory: PathLike, require_table: bool = True) -> FontRecord:
    """
    Load one font record directory.

    Args:
        directory: Record directory (meta.json, kerning.json, glyphs/)
        require_table: When False a missing kerning.json is allowed (prediction input)

    Returns:
        Validated FontRecord

    Raises:
        MissingGlyphError: If a glyph raster is absent
        ShapeError: If the kerning table is not n x n or sizes disagree
        EmptyGlyphError: If a glyph has no ink
    """
    directory = Path(directory)
    meta = load_json(directory / "meta.json")
    for key in ("font_id", "family_id"):
        if key not in meta:
            raise DataValidationError(f"{directory / 'meta.json'} lacks '{key}'")

    table_path = directory / "kerning.json"
    raw_table = None
    if table_path.exists():
        raw_table = load_json(table_path)
    elif require_table:
        raise DataValidationError(f"missing kerning table: {table_path}")

    if "categories" in meta:
        labels = tuple(str(label) for label in meta["categories"])
    elif isinstance(raw_table, list) and raw_table:
        labels = default_labels(len(raw_table))
    else:
        labels = LATIN_LABELS

    table = None
    if raw_table is not None:
        table = table_from_nested(raw_table, source=str(table_path))
        if table.n != len(labels):
            raise ShapeError(
                f"{table_path} has shape {table.n}x{table.n}, expected {len(labels)}x{len(labels)}"
            )
        table = KerningTable(table.values, labels)

    ink_value = int(meta.get("ink_value", 0))
    glyphs: List[GlyphImage] = []
    for category, label in enumerate(labels):
        glyph_path = directory / "glyphs" / f"{label}.pgm"
        if not glyph_path.exists():
            raise MissingGlyphError(label)
        pixels = _binarize(read_pgm(glyph_path), ink_value)
        if not pixels.any():
            raise EmptyGlyphError(f"glyph {label} of font {meta['font_id']} has no ink")
        baseline = int(meta.get("baseline_row", baseline_row_for(pixels.shape[0])))
        glyphs.append(GlyphImage(category=category, pixels=pixels, baseline_row=baseline))

    extra = {k: v for k, v in meta.items()
             if k not in ("font_id", "family_id", "style", "categories", "ink_value", "baseline_row")}
    return FontRecord(
        font_id=str(meta["font_id"]),
        family_id=str(meta["family_id"]),
        style=_parse_style(meta.get("style")),
        glyphs=tuple(glyphs),
        table=table,
        labels=labels,
        extra=extra,
    )


def save_font_record(record: FontRecord, directory: PathLike) -> None:
    """Write a record in the layout read by :func:`load_font_record`."""
    directory = Path(directory)
    meta: Dict[str, Any] = dict(record.extra)
    meta.update({
        "font_id": record.font_id,
        "family_id": record.family_id,
        "style": record.style.value,
        "categories": list(record.labels),
        "ink_value": 0,
        "baseline_row": record.glyphs[0].baseline_row,
    })
    save_json(directory / "meta.json", meta)
    if record.table is not None:
        save_kerning_table(record.table, directory / "kerning.json")
    for glyph, label in zip(record.glyphs, record.labels):
        write_pgm(np.where(glyph.pixels, 0, 255).astype(np.uint8), directory / "glyphs" / f"{label}.pgm")

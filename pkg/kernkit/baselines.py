"""
Statistical and heuristic spacing baselines.

Monospace predicts one constant for every pair, Average predicts the mean
training table, Optical keeps the blank area between two letters at a
calibrated target.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

from kernkit.dataset.records import FontRecord, GlyphImage, KerningTable, table_from_nested
from kernkit.errors import DataValidationError, EmptyGlyphError, ShapeError
from kernkit.features.geometry import center_of_gravity, row_extents
from kernkit.schemas import BaselineKind, OpticalCalibration
from kernkit.storage import load_json, save_json

logger = logging.getLogger(__name__)

BISECTION_RESOLUTION = 0.25

PathLike = Union[str, Path]


def _require_fonts(fonts: Sequence[FontRecord], what: str) -> None:
    if not fonts:
        raise DataValidationError(f"{what} needs at least one training font")


def fit_monospace(fonts: Sequence[FontRecord]) -> float:
    """Mean of every entry of every training table."""
    _require_fonts(fonts, "fit_monospace")
    total = 0.0
    count = 0
    for font in fonts:
        values = font.require_table().values
        total += float(values.sum())
        count += values.size
    return total / count


def fit_average(fonts: Sequence[FontRecord]) -> KerningTable:
    """
    Elementwise mean table across training fonts.

    Raises:
        ShapeError: If the fonts do not share N
    """
    _require_fonts(fonts, "fit_average")
    first = fonts[0].require_table()
    total = np.zeros_like(first.values)
    for font in fonts:
        values = font.require_table().values
        if values.shape != total.shape:
            raise ShapeError(
                f"fit_average: incompatible shapes {total.shape} and {values.shape} (font {font.font_id})"
            )
        total += values
    return KerningTable(total / len(fonts), first.labels)


@dataclass(frozen=True)
class GlyphProfile:
    """Row extents and COG of a glyph, computed once for repeated area queries."""

    inked: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cog: float

    @classmethod
    def of(cls, glyph: GlyphImage) -> "GlyphProfile":
        if not glyph.has_ink:
            raise EmptyGlyphError(f"glyph of category {glyph.category} has no ink")
        inked, left, right = row_extents(glyph.pixels)
        return cls(inked=inked, left=left, right=right, cog=center_of_gravity(glyph))


def profile_blank_area(left: GlyphProfile, right: GlyphProfile, space: float) -> float:
    shared = left.inked & right.inked
    if not shared.any():
        return 0.0
    # offset of the right glyph's frame so that the COG distance equals ``space``
    delta = space - right.cog + left.cog
    gaps = right.left[shared] + delta - left.right[shared] - 1.0
    return float(np.maximum(gaps, 0.0).sum())


def blank_area(left: GlyphImage, right: GlyphImage, space: float) -> float:
    """
    Blank pixels strictly between two glyphs placed ``space`` apart (COG to COG).

    Only rows inked in both glyphs count; each contributes
    ``max(0, L_right + delta - R_left - 1)``.

    Raises:
        EmptyGlyphError: If either glyph has no ink
    """
    return profile_blank_area(GlyphProfile.of(left), GlyphProfile.of(right), space)


def fit_optical(fonts: Sequence[FontRecord]) -> OpticalCalibration:
    """Target area = mean blank area at the ground-truth space over all training pairs."""
    _require_fonts(fonts, "fit_optical")
    total = 0.0
    count = 0
    size = fonts[0].image_size
    for font in fonts:
        table = font.require_table()
        profiles = [GlyphProfile.of(glyph) for glyph in font.glyphs]
        for i, left in enumerate(profiles):
            for j, right in enumerate(profiles):
                total += profile_blank_area(left, right, table.space(i, j))
                count += 1
    calibration = OpticalCalibration(target_area=total / count, s_min=0.0, s_max=2.0 * size)
    logger.info(f"Optical calibration: target area {calibration.target_area:.3f} px^2 over {count} pairs")
    return calibration


def _estimate(cal: OpticalCalibration, left: GlyphProfile, right: GlyphProfile) -> Tuple[float, bool]:
    lo, hi = cal.s_min, cal.s_max
    if profile_blank_area(left, right, lo) >= cal.target_area:
        return lo, True
    if profile_blank_area(left, right, hi) < cal.target_area:
        return hi, False
    while hi - lo > BISECTION_RESOLUTION:
        mid = 0.5 * (lo + hi)
        if profile_blank_area(left, right, mid) >= cal.target_area:
            hi = mid
        else:
            lo = mid
    return hi, True


def optical_estimate(cal: OpticalCalibration, left: GlyphImage, right: GlyphImage) -> float:
    """
    Smallest space whose blank area reaches the calibrated target, to 0.25 px.

    Returns ``s_max`` with a warning when the target is unreachable.
    """
    space, reached = _estimate(cal, GlyphProfile.of(left), GlyphProfile.of(right))
    if not reached:
        logger.warning(
            f"Optical target {cal.target_area:.2f} px^2 unreachable for categories "
            f"({left.category}, {right.category}); using s_max {cal.s_max}"
        )
    return space


class MonospaceBaseline:
    kind = BaselineKind.MONOSPACE

    def __init__(self, space: float):
        self.space = float(space)

    def predict(self, record: FontRecord) -> KerningTable:
        return KerningTable(np.full((record.n, record.n), self.space), record.labels)

    def to_artifact(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "space": self.space}


class AverageBaseline:
    kind = BaselineKind.AVERAGE

    def __init__(self, table: KerningTable):
        self.table = table

    def predict(self, record: FontRecord) -> KerningTable:
        if record.n != self.table.n:
            raise ShapeError(
                f"average baseline is {self.table.n}x{self.table.n}, font {record.font_id} has {record.n} glyphs"
            )
        return KerningTable(self.table.values.copy(), record.labels)

    def to_artifact(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "labels": list(self.table.labels),
            "table": [[float(v) for v in row] for row in self.table.values],
        }


class OpticalBaseline:
    kind = BaselineKind.OPTICAL

    def __init__(self, calibration: OpticalCalibration):
        self.calibration = calibration

    def predict(self, record: FontRecord) -> KerningTable:
        profiles = [GlyphProfile.of(glyph) for glyph in record.glyphs]
        values = np.empty((record.n, record.n))
        unreachable = 0
        for i, left in enumerate(profiles):
            for j, right in enumerate(profiles):
                values[i, j], reached = _estimate(self.calibration, left, right)
                unreachable += not reached
        if unreachable:
            logger.warning(
                f"Optical target unreachable for {unreachable} pairs of font {record.font_id}; "
                f"those pairs use s_max {self.calibration.s_max}"
            )
        return KerningTable(values, record.labels)

    def to_artifact(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, **self.calibration.model_dump()}


Baseline = Union[MonospaceBaseline, AverageBaseline, OpticalBaseline]


def fit_baseline(kind: BaselineKind, fonts: Sequence[FontRecord]) -> Baseline:
    kind = BaselineKind(kind)
    if kind == BaselineKind.MONOSPACE:
        return MonospaceBaseline(fit_monospace(fonts))
    if kind == BaselineKind.AVERAGE:
        return AverageBaseline(fit_average(fonts))
    return OpticalBaseline(fit_optical(fonts))


def save_baseline(baseline: Baseline, path: PathLike) -> None:
    save_json(path, baseline.to_artifact())


def baseline_from_artifact(data: Dict[str, Any], source: str = "baseline artifact") -> Baseline:
    try:
        kind = BaselineKind(data.get("kind"))
    except ValueError:
        raise DataValidationError(f"{source}: unknown baseline kind {data.get('kind')!r}") from None
    if kind == BaselineKind.MONOSPACE:
        return MonospaceBaseline(float(data["space"]))
    if kind == BaselineKind.AVERAGE:
        return AverageBaseline(table_from_nested(data["table"], data.get("labels", ()), source=source))
    fields = {key: data[key] for key in ("target_area", "s_min", "s_max")}
    return OpticalBaseline(OpticalCalibration(**fields))


def load_baseline(path: PathLike) -> Baseline:
    data = load_json(path)
    if not isinstance(data, dict):
        raise DataValidationError(f"{path}: baseline artifact must be a JSON object")
    try:
        return baseline_from_artifact(data, source=str(path))
    except KeyError as e:
        raise DataValidationError(f"{path}: baseline artifact lacks {e}") from None

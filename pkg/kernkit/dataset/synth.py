"""
Deterministic synthetic corpus with analytically known spacing.

Glyphs are drawn from a small parametric family of shapes; the ground-truth
space of every pair follows a fixed profile rule, so any learner can be
checked against exact targets.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from kernkit.dataset.records import (
    FontRecord,
    GlyphImage,
    KerningTable,
    baseline_row_for,
    default_labels,
    save_font_record,
)
from kernkit.dataset.splits import SPLIT_NAMES, save_manifest
from kernkit.errors import EmptyGlyphError
from kernkit.features.geometry import center_of_gravity, ink_width, row_extents
from kernkit.numerics.rng import make_rng
from kernkit.schemas import FontStyle, SplitManifest, SynthConfig, SynthMode
from kernkit.storage import save_json

logger = logging.getLogger(__name__)

STROKE_RANGE = (4, 16)
SLANT_RANGE = (-0.2, 0.2)
WIDTH_FACTOR_RANGE = (0.85, 1.25)
MAX_JITTER = 2
MODE_B_WEIGHT = 0.1

PathLike = Union[str, Path]
ShapeFn = Callable[[np.ndarray, np.ndarray, float, float, float], np.ndarray]


@dataclass(frozen=True)
class SynthFontContext:
    """Font-level quantities the spacing rule depends on."""

    stroke_width: int
    gap: float
    mode: SynthMode
    mean_ink_width: float
    image_size: int


def font_gap(stroke_width: float, fixed_gap: Union[float, None] = None) -> float:
    """Target closest-approach gap: 0.5 * stroke + 4 unless overridden."""
    if fixed_gap is not None:
        return float(fixed_gap)
    return 0.5 * stroke_width + 4.0


def synthetic_gt_space(left: GlyphImage, right: GlyphImage, context: SynthFontContext) -> float:
    """
    Ground-truth COG distance of a pair under the synthetic rule.

    Mode A places ``right`` so that its closest approach to ``left`` over the
    rows inked in both equals the font gap; when no row is shared the bounding
    columns are used instead. Mode B adds a font-global term driven by the
    mean ink width of all the font's glyphs.

    Raises:
        EmptyGlyphError: If either glyph has no ink
    """
    if not left.has_ink or not right.has_ink:
        raise EmptyGlyphError("synthetic_gt_space needs inked glyphs")
    inked_l, _, right_l = row_extents(left.pixels)
    inked_r, left_r, _ = row_extents(right.pixels)
    shared = inked_l & inked_r
    if shared.any():
        offset = context.gap + float(np.max(right_l[shared] - left_r[shared]))
    else:
        offset = context.gap + float(right_l[inked_l].max() - left_r[inked_r].min())
    space = offset + center_of_gravity(right) - center_of_gravity(left)
    if context.mode == SynthMode.B:
        space += MODE_B_WEIGHT * (context.mean_ink_width - context.image_size / 4.0)
    return space


def synthetic_gt_table(glyphs: Sequence[GlyphImage], context: SynthFontContext) -> np.ndarray:
    n = len(glyphs)
    table = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            table[i, j] = synthetic_gt_space(glyphs[i], glyphs[j], context)
    return table


# Shape family: membership tests on pixel-centre coordinates (u across, v down)
# inside a box of width bw and height gh with stroke s.

def _bar(u, v, bw, gh, s):
    return np.abs(u - bw / 2.0) < s / 2.0


def _rectangle(u, v, bw, gh, s):
    return (u < s) | (u >= bw - s) | (v < s) | (v >= gh - s)


def _wedge_extent(v, gh):
    return np.abs(2.0 * v / gh - 1.0)


def _left_wedge(u, v, bw, gh, s):
    return u >= (bw - s) * _wedge_extent(v, gh)


def _right_wedge(u, v, bw, gh, s):
    return u < bw - (bw - s) * _wedge_extent(v, gh)


def _ring(u, v, bw, gh, s):
    a, b = bw / 2.0, gh / 2.0
    du, dv = u - a, v - b
    outer = (du / a) ** 2 + (dv / b) ** 2 <= 1.0
    ia, ib = a - s, b - s
    if ia <= 0 or ib <= 0:
        return outer
    return outer & ((du / ia) ** 2 + (dv / ib) ** 2 > 1.0)


def _t_shape(u, v, bw, gh, s):
    return (v < s) | (np.abs(u - bw / 2.0) < s / 2.0)


def _l_shape(u, v, bw, gh, s):
    return (u < s) | (v >= gh - s)


SHAPES: Dict[str, Tuple[ShapeFn, float]] = {
    # name -> (membership, box width multiplier)
    "bar": (_bar, 1.0),
    "rectangle": (_rectangle, 1.0),
    "left_wedge": (_left_wedge, 1.0),
    "right_wedge": (_right_wedge, 1.0),
    "ring": (_ring, 1.1),
    "t_shape": (_t_shape, 1.0),
    "l_shape": (_l_shape, 0.85),
}


def render_shape(shape: str, size: int, stroke: int, slant: float, width_factor: float,
                 cycle: int, jitter: int) -> np.ndarray:
    """
    Rasterise one parametric glyph resting on the baseline.

    Repeated cycles of the shape list use shorter boxes (height / (1 + cycle/2))
    so every category stays distinguishable.
    """
    membership, width_mult = SHAPES[shape]
    baseline = baseline_row_for(size)
    cap = round(0.45 * size)
    gh = max(float(stroke) + 2.0, cap / (1.0 + 0.5 * cycle))
    if shape == "bar":
        bw = float(stroke)
    else:
        bw = max(round(0.3 * size * width_factor * width_mult), 2 * stroke + 2)
        bw = float(min(bw, size - 2 * MAX_JITTER - 4 - abs(slant) * gh))
    top = baseline - gh
    x0 = round((size - bw) / 2.0 - slant * gh / 2.0) + jitter

    rows = np.arange(size, dtype=np.float64)[:, None] + 0.5
    cols = np.arange(size, dtype=np.float64)[None, :] + 0.5
    v = np.broadcast_to(rows - top, (size, size))
    u = cols - x0 - slant * (baseline - rows)
    inside = (u >= 0) & (u < bw) & (v >= 0) & (v < gh)
    return inside & membership(u, v, bw, gh, float(stroke))


def _family_slant(cfg: SynthConfig, family_index: int) -> float:
    return float(make_rng(cfg.seed, "family", family_index).uniform(*SLANT_RANGE))


def generate_font(cfg: SynthConfig, font_index: int, family_index: int) -> FontRecord:
    """Build one synthetic font; its streams depend only on (seed, indices)."""
    rng = make_rng(cfg.seed, "font", font_index)
    size = cfg.image_size
    stroke = int(rng.integers(STROKE_RANGE[0], STROKE_RANGE[1] + 1))
    width_factor = float(rng.uniform(*WIDTH_FACTOR_RANGE))
    slant = _family_slant(cfg, family_index)
    labels = default_labels(cfg.n_categories)

    glyphs: List[GlyphImage] = []
    for category in range(cfg.n_categories):
        shape = cfg.shapes[category % len(cfg.shapes)]
        cycle = category // len(cfg.shapes)
        jitter = int(rng.integers(-MAX_JITTER, MAX_JITTER + 1))
        pixels = render_shape(shape, size, stroke, slant, width_factor, cycle, jitter)
        glyphs.append(GlyphImage(category=category, pixels=pixels, baseline_row=baseline_row_for(size)))

    context = SynthFontContext(
        stroke_width=stroke,
        gap=font_gap(stroke, cfg.fixed_gap),
        mode=cfg.mode,
        mean_ink_width=float(np.mean([ink_width(g) for g in glyphs])),
        image_size=size,
    )
    table = synthetic_gt_table(glyphs, context)
    return FontRecord(
        font_id=f"synth-{font_index:05d}",
        family_id=f"synth-family-{family_index:05d}",
        style=FontStyle.SYNTHETIC,
        glyphs=tuple(glyphs),
        table=KerningTable(table, labels),
        labels=labels,
        extra={
            "synthetic": {
                "stroke_width": stroke,
                "gap": context.gap,
                "slant": slant,
                "width_factor": width_factor,
                "mode": cfg.mode.value,
            }
        },
    )


def context_for_record(record: FontRecord) -> SynthFontContext:
    """Rebuild the spacing context of a generated font from its metadata."""
    synthetic = record.extra.get("synthetic")
    if not synthetic:
        raise KeyError(f"font {record.font_id} carries no synthetic metadata")
    return SynthFontContext(
        stroke_width=int(synthetic["stroke_width"]),
        gap=float(synthetic["gap"]),
        mode=SynthMode(synthetic["mode"]),
        mean_ink_width=float(np.mean([ink_width(g) for g in record.glyphs])),
        image_size=record.image_size,
    )


def plan_corpus(cfg: SynthConfig) -> Tuple[SplitManifest, List[Tuple[str, int, int]]]:
    """
    Assign font and family indices to splits.

    Families never straddle splits: consecutive fonts of one split are grouped
    ``fonts_per_family`` at a time.
    """
    counts = {"train": cfg.train_fonts, "val": cfg.val_fonts, "test": cfg.test_fonts}
    plan: List[Tuple[str, int, int]] = []
    ids: Dict[str, List[str]] = {name: [] for name in SPLIT_NAMES}
    font_index = 0
    family_base = 0
    for split in SPLIT_NAMES:
        count = counts[split]
        for local in range(count):
            family_index = family_base + local // cfg.fonts_per_family
            plan.append((split, font_index, family_index))
            ids[split].append(f"synth-{font_index:05d}")
            font_index += 1
        family_base += -(-count // cfg.fonts_per_family)
    return SplitManifest(**ids), plan


def generate_synthetic_corpus(cfg: SynthConfig, output: PathLike, threads: int = 1) -> SplitManifest:
    """
    Write a complete corpus tree: fonts/<font_id>/, splits.json, synth_config.json.

    Identical configurations produce byte-identical trees.

    Args:
        cfg: Generation settings
        output: Corpus root directory (created if needed)
        threads: Worker threads; fonts are independent

    Returns:
        The split manifest written to splits.json
    """
    output = Path(output)
    manifest, plan = plan_corpus(cfg)
    logger.info(
        f"Generating synthetic corpus in {output}: {len(plan)} fonts, N={cfg.n_categories}, "
        f"H={cfg.image_size}, mode {cfg.mode.value}, seed {cfg.seed}"
    )

    def build(entry: Tuple[str, int, int]) -> str:
        _, font_index, family_index = entry
        record = generate_font(cfg, font_index, family_index)
        save_font_record(record, output / "fonts" / record.font_id)
        return record.font_id

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(build, plan))
    else:
        for entry in plan:
            build(entry)

    save_manifest(manifest, output / "splits.json")
    save_json(output / "synth_config.json", cfg.model_dump(mode="json"))
    logger.info(f"Synthetic corpus written: {len(plan)} fonts")
    return manifest

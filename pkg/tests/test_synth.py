"""
Tests for the synthetic corpus generator and its spacing rule.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from helpers import bar_glyph, glyph
from kernkit.dataset.records import load_font_record
from kernkit.dataset.splits import load_corpus
from kernkit.dataset.synth import (
    MODE_B_WEIGHT,
    SynthFontContext,
    context_for_record,
    font_gap,
    generate_font,
    generate_synthetic_corpus,
    plan_corpus,
    synthetic_gt_space,
    synthetic_gt_table,
)
from kernkit.errors import EmptyGlyphError
from kernkit.features.geometry import ink_width
from kernkit.schemas import FontStyle, SynthConfig, SynthMode


def _context(gap=6.0, mode=SynthMode.A, mean_ink_width=16.0, size=32):
    return SynthFontContext(stroke_width=4, gap=gap, mode=mode, mean_ink_width=mean_ink_width, image_size=size)


def _scan_space(left, right, gap):
    """Brute force: smallest half-pixel offset whose closest same-row ink approach reaches the gap."""
    size = left.pixels.shape[0]
    row_closest = []
    for row in range(size):
        left_cols = np.nonzero(left.pixels[row])[0]
        right_cols = np.nonzero(right.pixels[row])[0]
        if len(left_cols) and len(right_cols):
            row_closest.append(np.subtract.outer(right_cols, left_cols).min())
    closest = min(row_closest)
    for offset in np.arange(-2 * size, 2 * size, 0.5):
        if closest + offset >= gap:
            cog_l = np.nonzero(left.pixels)[1].mean()
            cog_r = np.nonzero(right.pixels)[1].mean()
            return offset + cog_r - cog_l
    raise AssertionError("no offset found")


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestSpacingRule:
    def test_font_gap(self):
        assert font_gap(4) == 6.0
        assert font_gap(7) == 7.5
        assert font_gap(7, fixed_gap=3) == 3.0

    def test_two_bars_sit_one_gap_apart(self):
        bar = bar_glyph(32, 10)
        assert synthetic_gt_space(bar, bar, _context()) == pytest.approx(6.0)

    def test_shifted_copy_keeps_the_space(self):
        assert synthetic_gt_space(bar_glyph(32, 10), bar_glyph(32, 15), _context()) == pytest.approx(6.0)

    def test_gap_slope_is_one_in_mode_a(self):
        font = generate_font(SynthConfig(n_categories=4, image_size=64, seed=5), 0, 0)
        left, right = font.glyphs[1], font.glyphs[2]
        base = synthetic_gt_space(left, right, _context(gap=6.0, size=64))
        wider = synthetic_gt_space(left, right, _context(gap=7.0, size=64))
        assert wider - base == pytest.approx(1.0)

    def test_wedge_pair_matches_brute_force(self):
        cfg = SynthConfig(n_categories=2, image_size=32, shapes=["left_wedge", "right_wedge"], seed=9)
        font = generate_font(cfg, 0, 0)
        context = context_for_record(font)
        for i, j in [(0, 1), (1, 0), (0, 0)]:
            expected = _scan_space(font.glyphs[i], font.glyphs[j], context.gap)
            assert font.table.values[i, j] == pytest.approx(expected, abs=1e-9)

    def test_horizontal_translation_is_invisible(self):
        font = generate_font(SynthConfig(n_categories=3, image_size=64, seed=2), 0, 0)
        left, right = font.glyphs[0], font.glyphs[2]
        assert not right.pixels[:, -1].any()
        shifted = glyph(np.roll(right.pixels, 1, axis=1), category=2)
        context = context_for_record(font)
        assert synthetic_gt_space(left, shifted, context) == pytest.approx(
            synthetic_gt_space(left, right, context)
        )

    def test_disjoint_rows_fall_back_to_bounding_columns(self):
        top = bar_glyph(32, 10, rows=slice(0, 8))
        bottom = bar_glyph(32, 12, rows=slice(20, 30))
        # offset = 6 + (10 - 12); space = offset + 12 - 10
        assert synthetic_gt_space(top, bottom, _context()) == pytest.approx(6.0)

    def test_mode_b_adds_font_global_term(self):
        bar = bar_glyph(32, 10)
        a = synthetic_gt_space(bar, bar, _context(mean_ink_width=20.0))
        b = synthetic_gt_space(bar, bar, _context(mode=SynthMode.B, mean_ink_width=20.0))
        assert b - a == pytest.approx(MODE_B_WEIGHT * (20.0 - 8.0))

    def test_empty_glyph_rejected(self):
        empty = glyph(np.zeros((32, 32), dtype=bool))
        with pytest.raises(EmptyGlyphError):
            synthetic_gt_space(empty, bar_glyph(32, 3), _context())


class TestGenerateFont:
    def test_metadata_and_ids(self):
        cfg = SynthConfig(n_categories=5, image_size=32, seed=1)
        font = generate_font(cfg, 7, 3)
        assert font.font_id == "synth-00007"
        assert font.family_id == "synth-family-00003"
        assert font.style == FontStyle.SYNTHETIC
        assert font.n == 5
        assert set(font.extra["synthetic"]) == {"stroke_width", "gap", "slant", "width_factor", "mode"}

    @pytest.mark.parametrize("size", [32, 64, 128, 256])
    def test_stroke_width_independent_of_size(self, size):
        cfg = SynthConfig(n_categories=7, image_size=size, seed=2)
        strokes = set()
        for index in range(40):
            font = generate_font(cfg, index, index)
            stroke = font.extra["synthetic"]["stroke_width"]
            assert 4 <= stroke <= 16
            assert font.extra["synthetic"]["gap"] == 0.5 * stroke + 4.0
            assert all(g.has_ink for g in font.glyphs)
            strokes.add(stroke)
        assert min(strokes) < 8 and max(strokes) > 12

    def test_same_seed_same_stroke_at_every_size(self):
        fonts = [generate_font(SynthConfig(n_categories=3, image_size=size, seed=9), 5, 5) for size in (32, 64, 128, 256)]
        strokes = {font.extra["synthetic"]["stroke_width"] for font in fonts}
        assert len(strokes) == 1

    def test_glyphs_rest_above_the_baseline(self):
        font = generate_font(SynthConfig(n_categories=7, image_size=64, seed=4), 0, 0)
        for g in font.glyphs:
            assert not g.pixels[g.baseline_row:].any()

    def test_mode_changes_table_not_glyphs(self):
        a = generate_font(SynthConfig(n_categories=6, image_size=32, seed=8, mode="A"), 0, 0)
        b = generate_font(SynthConfig(n_categories=6, image_size=32, seed=8, mode="B"), 0, 0)
        for ga, gb in zip(a.glyphs, b.glyphs):
            np.testing.assert_array_equal(ga.pixels, gb.pixels)
        mean_width = np.mean([ink_width(g) for g in a.glyphs])
        np.testing.assert_allclose(b.table.values - a.table.values, MODE_B_WEIGHT * (mean_width - 8.0))

    def test_table_matches_rule(self):
        font = generate_font(SynthConfig(n_categories=4, image_size=32, seed=6), 2, 1)
        np.testing.assert_array_equal(font.table.values, synthetic_gt_table(font.glyphs, context_for_record(font)))

    def test_family_members_share_slant(self):
        cfg = SynthConfig(n_categories=3, image_size=32, seed=6)
        first, second, other = generate_font(cfg, 0, 0), generate_font(cfg, 1, 0), generate_font(cfg, 2, 1)
        assert first.extra["synthetic"]["slant"] == second.extra["synthetic"]["slant"]
        assert first.extra["synthetic"]["slant"] != other.extra["synthetic"]["slant"]


class TestCorpus:
    def test_generation_is_byte_identical(self, tmp_path, tiny_synth_config):
        generate_synthetic_corpus(tiny_synth_config, tmp_path / "one")
        generate_synthetic_corpus(tiny_synth_config, tmp_path / "two", threads=3)
        assert _tree_bytes(tmp_path / "one") == _tree_bytes(tmp_path / "two")

    def test_tables_reproduce_from_emitted_rasters(self, tiny_corpus):
        corpus = load_corpus(tiny_corpus)
        for font_id in corpus.manifest.all_ids():
            record = load_font_record(corpus.font_dir(font_id))
            recomputed = synthetic_gt_table(record.glyphs, context_for_record(record))
            np.testing.assert_array_equal(record.table.values, recomputed)

    def test_written_files(self, tiny_corpus):
        assert (tiny_corpus / "splits.json").exists()
        assert (tiny_corpus / "synth_config.json").exists()
        assert len(list((tiny_corpus / "fonts").iterdir())) == 8

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_families_never_straddle_splits(self, tmp_path, seed):
        cfg = SynthConfig(n_categories=2, image_size=32, train_fonts=5, val_fonts=2, test_fonts=4,
                          fonts_per_family=3, seed=seed)
        generate_synthetic_corpus(cfg, tmp_path / "corpus")
        corpus = load_corpus(tmp_path / "corpus", validate=True)
        families = {split: {corpus.record(fid).family_id for fid in corpus.manifest.split(split)}
                    for split in ("train", "val", "test")}
        assert not families["train"] & families["test"]
        assert not families["train"] & families["val"]
        assert not families["val"] & families["test"]

    def test_plan_counts(self):
        manifest, plan = plan_corpus(SynthConfig(train_fonts=3, val_fonts=1, test_fonts=2, fonts_per_family=2))
        assert (len(manifest.train), len(manifest.val), len(manifest.test)) == (3, 1, 2)
        assert [family for _, _, family in plan] == [0, 0, 1, 2, 3, 3]


class TestSynthConfig:
    def test_unsupported_size(self):
        with pytest.raises(ValidationError):
            SynthConfig(image_size=48)

    def test_unknown_shape(self):
        with pytest.raises(ValidationError):
            SynthConfig(shapes=["star"])

"""
Tests for word composition and comparison previews.
"""
import numpy as np
import pytest

from helpers import bar_glyph, glyph, random_glyph
from kernkit.dataset.pgm import read_pgm
from kernkit.errors import DataValidationError, EmptyGlyphError
from kernkit.features.geometry import center_of_gravity
from kernkit.render import (
    BACKGROUND,
    INK,
    MARGIN,
    compose_comparison,
    compose_offset_examples,
    compose_word,
    glyph_offsets,
    write_gap_csv,
    write_pgm,
    word_glyphs,
)


def _ink_columns(composite):
    return np.nonzero((composite.pixels == INK).any(axis=0))[0].tolist()


class TestComposeWord:
    def test_bars_land_space_apart(self):
        composite = compose_word([bar_glyph(32, 10), bar_glyph(32, 10)], [6.0])
        assert _ink_columns(composite) == [MARGIN, MARGIN + 6]
        assert composite.width == 6 + 1 + 2 * MARGIN
        assert composite.height == 32
        assert set(np.unique(composite.pixels)) == {INK, BACKGROUND}

    def test_half_pixel_rounds_up(self):
        assert glyph_offsets([bar_glyph(32, 10), bar_glyph(32, 10)], [6.5]) == [0, 7]
        assert glyph_offsets([bar_glyph(32, 10), bar_glyph(32, 10)], [-2.5]) == [0, -2]

    def test_realised_spaces_within_half_pixel(self):
        rng = np.random.default_rng(40)
        glyphs = [random_glyph(rng, 32, density=0.2) for _ in range(6)]
        spaces = rng.uniform(-5.0, 30.0, size=5)
        composite = compose_word(glyphs, spaces)
        centres = [x + center_of_gravity(g) for x, g in zip(composite.placements, glyphs)]
        np.testing.assert_array_less(np.abs(np.diff(centres) - spaces), 0.5 + 1e-9)

    def test_cog_measured_on_canvas(self):
        glyphs = [bar_glyph(32, 4, width=3), bar_glyph(32, 20, width=3)]
        composite = compose_word(glyphs, [11.0])
        cols = np.nonzero(composite.pixels == INK)[1]
        first = cols[cols < cols.min() + 3].mean()
        second = cols[cols >= cols.min() + 3].mean()
        assert second - first == pytest.approx(11.0)

    def test_overlapping_ink_merges(self):
        composite = compose_word([bar_glyph(32, 10, width=4), bar_glyph(32, 10, width=4)], [2.0])
        assert _ink_columns(composite) == list(range(MARGIN, MARGIN + 6))

    def test_space_count_must_match(self):
        with pytest.raises(DataValidationError):
            compose_word([bar_glyph(32, 3), bar_glyph(32, 3)], [1.0, 2.0])

    def test_empty_glyph(self):
        with pytest.raises(EmptyGlyphError):
            compose_word([bar_glyph(32, 3), glyph(np.zeros((32, 32)))], [4.0])

    def test_pgm_round_trip(self, tmp_path):
        composite = compose_word([bar_glyph(32, 3), bar_glyph(32, 7, width=2)], [9.0])
        write_pgm(composite, tmp_path / "word.pgm")
        np.testing.assert_array_equal(read_pgm(tmp_path / "word.pgm"), composite.pixels)


class TestComparison:
    def test_rows_and_gap_table(self, tmp_path):
        glyphs = [bar_glyph(32, 10), bar_glyph(32, 12), bar_glyph(32, 8)]
        comparison = compose_comparison(glyphs, [6.0, 8.0], [7.5, 8.0])
        assert comparison.stacked.height == comparison.reference.height + comparison.estimate.height + 4
        assert comparison.gaps.columns.tolist() == ["gap", "gt", "est", "signed_error"]
        assert comparison.gaps["signed_error"].tolist() == [1.5, 0.0]
        write_gap_csv(comparison, tmp_path / "gaps.csv")
        assert (tmp_path / "gaps.csv").read_text() == (
            "gap,gt,est,signed_error\n0,6.000,7.500,1.500\n1,8.000,8.000,0.000\n"
        )

    def test_reference_row_on_top(self):
        glyphs = [bar_glyph(32, 10), bar_glyph(32, 10)]
        comparison = compose_comparison(glyphs, [6.0], [12.0])
        top = comparison.stacked.pixels[:32]
        bottom = comparison.stacked.pixels[36:68]
        assert np.nonzero((top == INK).any(axis=0))[0].tolist() == [MARGIN, MARGIN + 6]
        assert np.nonzero((bottom == INK).any(axis=0))[0].tolist() == [MARGIN, MARGIN + 12]

    def test_length_mismatch(self):
        with pytest.raises(DataValidationError):
            compose_comparison([bar_glyph(32, 1), bar_glyph(32, 1)], [1.0], [1.0, 2.0])

    def test_offset_examples_have_three_rows(self):
        glyphs = [bar_glyph(32, 10), bar_glyph(32, 10)]
        composite = compose_offset_examples(glyphs, [10.0], ae=3.0)
        assert composite.height == 3 * 32 + 2 * 4


class TestWordGlyphs:
    def test_word_lookup(self):
        glyphs = [bar_glyph(32, 5, category=k) for k in range(3)]
        table = np.arange(9, dtype=float).reshape(3, 3)
        picked, spaces = word_glyphs(glyphs, table, "CAB", ("A", "B", "C"))
        assert [g.category for g in picked] == [2, 0, 1]
        assert spaces == [6.0, 1.0]

    def test_unknown_letter(self):
        glyphs = [bar_glyph(32, 5, category=k) for k in range(2)]
        with pytest.raises(DataValidationError):
            word_glyphs(glyphs, np.zeros((2, 2)), "AZ", ("A", "B"))

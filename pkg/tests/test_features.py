"""
Tests for glyph geometry, the peripheral feature and the glyph encoder.
"""
import numpy as np
import pytest

from helpers import bar_glyph, glyph, make_font, random_pixels
from kernkit.dataset.splits import load_corpus
from kernkit.errors import ConfigError, DataValidationError, EmptyGlyphError, ShapeError
from kernkit.features.encoder import (
    category_accuracy,
    classifier_logits,
    collect_glyphs,
    encode_pixels,
    encoder_forward,
    init_encoder,
    pretrain_encoder,
    train_classifier,
)
from kernkit.features.extract import FeatureExtractor
from kernkit.features.geometry import center_of_gravity, ink_width, peripheral_feature, row_extents
from kernkit.numerics.gradcheck import grad_check
from kernkit.numerics.params import ParameterStore
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import cross_entropy
from kernkit.schemas import EncoderConfig, FeatureKind, SynthConfig

TINY_ENCODER = EncoderConfig(feature_dim=8, channels=(2, 2, 2, 2), seed=4)


class TestGeometry:
    def test_center_of_gravity_of_bar(self):
        assert center_of_gravity(bar_glyph(32, 10, width=2)) == pytest.approx(10.5)

    def test_center_of_gravity_weights_every_pixel(self):
        pixels = np.zeros((32, 32), dtype=bool)
        pixels[0, 0] = True
        pixels[1, 0:3] = True
        # columns 0, 0, 1, 2
        assert center_of_gravity(glyph(pixels)) == pytest.approx(0.75)

    def test_center_of_gravity_needs_ink(self):
        with pytest.raises(EmptyGlyphError):
            center_of_gravity(glyph(np.zeros((32, 32), dtype=bool)))

    def test_row_extents_sentinels(self):
        pixels = np.zeros((4, 6), dtype=bool)
        pixels[1, 2:5] = True
        inked, left, right = row_extents(pixels)
        assert inked.tolist() == [False, True, False, False]
        assert left.tolist() == [6, 2, 6, 6]
        assert right.tolist() == [-1, 4, -1, -1]

    def test_ink_width(self):
        pixels = np.zeros((32, 32), dtype=bool)
        pixels[3, 4] = True
        pixels[20, 9] = True
        assert ink_width(glyph(pixels)) == 6

    def test_peripheral_single_pixel(self):
        pixels = np.zeros((32, 32), dtype=bool)
        pixels[5, 3] = True
        feature = peripheral_feature(glyph(pixels))
        assert feature.shape == (64,)
        assert feature[5] == pytest.approx(3 / 32)
        assert feature[32 + 5] == pytest.approx(28 / 32)
        empty_rows = np.delete(np.arange(64), [5, 37])
        np.testing.assert_array_equal(feature[empty_rows], 1.0)

    def test_peripheral_full_row(self):
        pixels = np.zeros((32, 32), dtype=bool)
        pixels[7, :] = True
        feature = peripheral_feature(glyph(pixels))
        assert feature[7] == 0.0
        assert feature[32 + 7] == 0.0

    def test_center_of_gravity_matches_pixel_loop(self):
        rng = np.random.default_rng(40)
        for case in range(120):
            size = (32, 64)[case % 2]
            pixels = random_pixels(rng, size, density=float(rng.uniform(0.01, 0.6)))
            total = count = 0
            for row in range(size):
                for col in range(size):
                    if pixels[row, col]:
                        total += col
                        count += 1
            assert center_of_gravity(glyph(pixels)) == pytest.approx(total / count, rel=1e-12)

    def test_center_of_gravity_follows_horizontal_shift(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            pixels = np.zeros((32, 32), dtype=bool)
            pixels[:, 8:20] = random_pixels(rng, 32)[:, :12]
            pixels[16, 10] = True
            shift = int(rng.integers(-8, 13))
            moved = np.roll(pixels, shift, axis=1)
            assert center_of_gravity(glyph(moved)) == pytest.approx(center_of_gravity(glyph(pixels)) + shift)

    def test_peripheral_matches_row_scan(self):
        rng = np.random.default_rng(42)
        for case in range(120):
            size = (32, 64)[case % 2]
            pixels = random_pixels(rng, size, density=float(rng.uniform(0.005, 0.2)))
            expected = np.full(2 * size, float(size))
            for row in range(size):
                for col in range(size):
                    if pixels[row, col]:
                        expected[row] = col
                        break
                for col in range(size - 1, -1, -1):
                    if pixels[row, col]:
                        expected[size + row] = size - 1 - col
                        break
            np.testing.assert_allclose(peripheral_feature(glyph(pixels)), expected / size)

    def test_peripheral_rows_are_independent(self):
        rng = np.random.default_rng(43)
        for _ in range(30):
            pixels = random_pixels(rng, 32, density=0.1)
            row = int(rng.integers(0, 32))
            changed = pixels.copy()
            changed[row] = rng.random(32) < 0.3
            changed[row, int(rng.integers(0, 32))] = True
            before, after = peripheral_feature(glyph(pixels)), peripheral_feature(glyph(changed))
            others = np.delete(np.arange(64), [row, 32 + row])
            np.testing.assert_array_equal(before[others], after[others])


class TestEncoder:
    def test_output_shape(self):
        params = init_encoder(TINY_ENCODER, n_categories=3)
        rng = np.random.default_rng(0)
        features = encode_pixels(params, np.stack([random_pixels(rng) for _ in range(5)]))
        assert features.shape == (5, 8)
        assert np.all(np.isfinite(features))

    def test_zero_weights_give_projection_bias(self):
        params = init_encoder(TINY_ENCODER, n_categories=3)
        arrays = {name: np.zeros_like(value) if name != "proj.b" else value for name, value in params.items()}
        zeroed = ParameterStore(arrays)
        out = encoder_forward(zeroed, glyph(random_pixels(np.random.default_rng(1))))
        np.testing.assert_allclose(out, params["proj.b"], rtol=1e-6)

    def test_init_is_seeded(self):
        assert init_encoder(TINY_ENCODER, 3).equals(init_encoder(TINY_ENCODER, 3))
        assert not init_encoder(TINY_ENCODER, 3).equals(init_encoder(TINY_ENCODER, 3, seed=99))

    def test_rejects_non_square_batch(self):
        params = init_encoder(TINY_ENCODER, n_categories=3)
        with pytest.raises(ShapeError):
            encode_pixels(params, np.zeros((2, 8, 9), dtype=bool))

    def test_gradients_match_finite_differences(self):
        params = init_encoder(TINY_ENCODER, n_categories=3)
        rng = make_rng(0, "encoder-check")
        pixels = rng.random((4, 8, 8)) < 0.4
        labels = np.array([0, 1, 2, 1])
        error = grad_check(lambda g: cross_entropy(classifier_logits(g, pixels), labels), params,
                           sample_count=32, seed=1)
        assert error <= 1e-5

    def test_collect_glyphs_labels(self):
        fonts = [make_font("a", np.zeros((3, 3)), seed=1), make_font("b", np.zeros((3, 3)), seed=2)]
        pixels, labels = collect_glyphs(fonts)
        assert pixels.shape == (6, 32, 32)
        assert labels.tolist() == [0, 1, 2, 0, 1, 2]

    def test_single_category_rejected(self):
        pixels = np.zeros((4, 32, 32), dtype=bool)
        with pytest.raises(DataValidationError):
            train_classifier(pixels, np.zeros(4, dtype=np.int64), 1, TINY_ENCODER)

    def test_pretraining_returns_frozen_store(self):
        fonts = [make_font(f"f{k}", np.zeros((3, 3)), seed=k) for k in range(3)]
        cfg = TINY_ENCODER.model_copy(update={"max_epochs": 2, "batch_size": 4})
        result = pretrain_encoder(fonts, cfg)
        assert result.params.frozen
        assert len(result.history) <= 2
        assert 1 <= result.best_epoch <= 2
        with pytest.raises(PermissionError):
            result.params["proj.b"] = np.zeros(8)

    @pytest.mark.slow
    def test_recognises_synthetic_categories(self, tmp_path):
        from kernkit.dataset.synth import generate_synthetic_corpus

        cfg = SynthConfig(n_categories=7, image_size=64, train_fonts=30, val_fonts=8, test_fonts=8, seed=12)
        generate_synthetic_corpus(cfg, tmp_path / "corpus")
        corpus = load_corpus(tmp_path / "corpus")
        encoder_cfg = EncoderConfig(feature_dim=32, channels=(8, 8, 16, 16), lr=3e-3, batch_size=32,
                                    max_epochs=40, patience=8)
        result = pretrain_encoder(corpus.fonts("train"), encoder_cfg, corpus.fonts("val"))
        pixels, labels = collect_glyphs(corpus.fonts("test"))
        assert category_accuracy(result.params, pixels, labels) > 0.9

    @pytest.mark.slow
    def test_shuffled_labels_stay_at_chance(self, tmp_path):
        from kernkit.dataset.synth import generate_synthetic_corpus

        cfg = SynthConfig(n_categories=7, image_size=64, train_fonts=30, val_fonts=8, test_fonts=8, seed=12)
        generate_synthetic_corpus(cfg, tmp_path / "corpus")
        corpus = load_corpus(tmp_path / "corpus")
        rng = np.random.default_rng(7)
        pixels, labels = collect_glyphs(corpus.fonts("train"))
        val_pixels, val_labels = collect_glyphs(corpus.fonts("val"))
        encoder_cfg = EncoderConfig(feature_dim=32, channels=(8, 8, 16, 16), lr=3e-3, batch_size=32,
                                    max_epochs=40, patience=8)
        result = train_classifier(pixels, rng.permutation(labels), 7, encoder_cfg,
                                  val_pixels, rng.permutation(val_labels))
        test_pixels, test_labels = collect_glyphs(corpus.fonts("test"))
        assert category_accuracy(result.params, test_pixels, test_labels) < 0.4


class TestFeatureExtractor:
    def test_encoder_features_need_a_frozen_encoder(self):
        with pytest.raises(ConfigError):
            FeatureExtractor(FeatureKind.ENCODER)
        with pytest.raises(ConfigError):
            FeatureExtractor(FeatureKind.ENCODER, encoder=init_encoder(TINY_ENCODER, 3))

    def test_peripheral_dimension(self):
        extractor = FeatureExtractor("peripheral")
        font = make_font("p", np.zeros((3, 3)))
        features = extractor.font_features(font)
        assert features.shape == (3, 64)
        assert extractor.feature_dim(32) == 64

    def test_encoder_features_per_font(self):
        encoder = init_encoder(TINY_ENCODER, 3).freeze()
        extractor = FeatureExtractor(FeatureKind.ENCODER, encoder=encoder, threads=2)
        fonts = [make_font(f"f{k}", np.zeros((3, 3)), seed=k) for k in range(3)]
        batch = extractor.batch(fonts)
        assert [f.shape for f in batch] == [(3, 8)] * 3
        np.testing.assert_allclose(batch[1][2], encoder_forward(encoder, fonts[1].glyphs[2]))
        assert extractor.font_features(fonts[0]) is batch[0]

    def test_encoder_untouched_by_extraction(self):
        encoder = init_encoder(TINY_ENCODER, 3).freeze()
        before = encoder.copy()
        FeatureExtractor(FeatureKind.ENCODER, encoder=encoder).warm([make_font("x", np.zeros((3, 3)))])
        assert encoder.equals(before)

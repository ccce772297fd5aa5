"""Glyph geometry, the peripheral feature and the pretrained glyph encoder."""
from kernkit.features.encoder import (
    PretrainResult,
    encode_pixels,
    encoder_forward,
    encoder_graph,
    init_encoder,
    pretrain_encoder,
    train_classifier,
)
from kernkit.features.extract import FeatureExtractor
from kernkit.features.geometry import center_of_gravity, ink_width, peripheral_feature, row_extents

__all__ = [
    "FeatureExtractor",
    "PretrainResult",
    "center_of_gravity",
    "encode_pixels",
    "encoder_forward",
    "encoder_graph",
    "ink_width",
    "init_encoder",
    "peripheral_feature",
    "pretrain_encoder",
    "row_extents",
    "train_classifier",
]

"""
Small convolutional glyph encoder, pretrained on category prediction and then frozen.

Four stride-2 3x3 convolution stages with ReLU, global average pooling and a
linear map to the feature length D. A category head (D -> N) is used only
during pretraining.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from kernkit.dataset.records import FontRecord, GlyphImage
from kernkit.errors import DataValidationError, ShapeError
from kernkit.numerics.optim import AdamState, EarlyStopping, adam_step
from kernkit.numerics.params import ParameterStore, uniform_init
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import (
    Graph,
    Tensor,
    backward,
    conv2d,
    cross_entropy,
    get_dtype,
    linear,
    mean,
    relu,
)
from kernkit.schemas import EncoderConfig

logger = logging.getLogger(__name__)

INFERENCE_BATCH = 256


def init_encoder(cfg: EncoderConfig, n_categories: int, seed: Optional[int] = None) -> ParameterStore:
    """Fresh encoder parameters, uniform in ±1/sqrt(fan_in)."""
    rng = make_rng(cfg.seed if seed is None else seed, "encoder-init")
    dtype = get_dtype()
    arrays: Dict[str, np.ndarray] = {}
    c_in = 1
    for stage, c_out in enumerate(cfg.channels, start=1):
        fan_in = c_in * 9
        arrays[f"conv{stage}.w"] = uniform_init(rng, (c_in, 3, 3, c_out), fan_in, dtype)
        arrays[f"conv{stage}.b"] = uniform_init(rng, (c_out,), fan_in, dtype)
        c_in = c_out
    arrays["proj.w"] = uniform_init(rng, (c_in, cfg.feature_dim), c_in, dtype)
    arrays["proj.b"] = uniform_init(rng, (cfg.feature_dim,), c_in, dtype)
    arrays["head.w"] = uniform_init(rng, (cfg.feature_dim, n_categories), cfg.feature_dim, dtype)
    arrays["head.b"] = uniform_init(rng, (n_categories,), cfg.feature_dim, dtype)
    return ParameterStore(arrays)


def encoder_stage_count(params: ParameterStore) -> int:
    count = 0
    while f"conv{count + 1}.w" in params:
        count += 1
    return count


def encoder_feature_dim(params: ParameterStore) -> int:
    return int(params["proj.w"].shape[1])


def encoder_graph(graph: Graph, pixels: np.ndarray) -> Tensor:
    """
    Encode a batch of rasters on ``graph``.

    Args:
        graph: Graph whose store holds encoder parameters
        pixels: (B, H, H) binary rasters, True = ink

    Returns:
        (B, D) feature tensor
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[1] != pixels.shape[2]:
        raise ShapeError(f"encoder: expected (B, H, H) rasters, got shape {pixels.shape}")
    stages = encoder_stage_count(graph.params)
    if stages == 0:
        raise ShapeError("encoder: parameter store holds no convolution stages")
    if graph.params["conv1.w"].shape[0] != 1:
        raise ShapeError(f"encoder: first stage expects 1 input channel, got {graph.params['conv1.w'].shape}")
    x = graph.constant(pixels[..., None].astype(np.float64))
    for stage in range(1, stages + 1):
        x = relu(conv2d(x, graph.param(f"conv{stage}.w"), graph.param(f"conv{stage}.b")))
    pooled = mean(x, axes=(1, 2))
    return linear(pooled, graph.param("proj.w"), graph.param("proj.b"))


def encode_pixels(params: ParameterStore, pixels: np.ndarray, batch_size: int = INFERENCE_BATCH) -> np.ndarray:
    """Features of a stack of rasters as a float64 (B, D) array."""
    pixels = np.asarray(pixels)
    chunks: List[np.ndarray] = []
    for start in range(0, len(pixels), batch_size):
        graph = Graph(params)
        chunks.append(encoder_graph(graph, pixels[start:start + batch_size]).data.astype(np.float64))
    if not chunks:
        return np.zeros((0, encoder_feature_dim(params)))
    return np.concatenate(chunks, axis=0)


def encoder_forward(params: ParameterStore, glyph: GlyphImage) -> np.ndarray:
    """Feature vector (length D) of one glyph."""
    return encode_pixels(params, glyph.pixels[None])[0]


def classifier_logits(graph: Graph, pixels: np.ndarray) -> Tensor:
    return linear(encoder_graph(graph, pixels), graph.param("head.w"), graph.param("head.b"))


def category_accuracy(params: ParameterStore, pixels: np.ndarray, labels: np.ndarray,
                      batch_size: int = INFERENCE_BATCH) -> float:
    if len(labels) == 0:
        return 0.0
    hits = 0
    for start in range(0, len(labels), batch_size):
        logits = classifier_logits(Graph(params), pixels[start:start + batch_size]).data
        hits += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return hits / len(labels)


@dataclass
class PretrainResult:
    """Frozen encoder plus its training history."""

    params: ParameterStore
    best_accuracy: float
    best_epoch: int
    history: List[Dict[str, float]] = field(default_factory=list)


def collect_glyphs(fonts: Sequence[FontRecord]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack every glyph of ``fonts`` with its category label."""
    if not fonts:
        return np.zeros((0, 0, 0), dtype=bool), np.zeros((0,), dtype=np.int64)
    pixels = np.stack([g.pixels for font in fonts for g in font.glyphs])
    labels = np.array([g.category for font in fonts for g in font.glyphs], dtype=np.int64)
    return pixels, labels


def train_classifier(
    pixels: np.ndarray,
    labels: np.ndarray,
    n_categories: int,
    cfg: EncoderConfig,
    val_pixels: Optional[np.ndarray] = None,
    val_labels: Optional[np.ndarray] = None,
) -> PretrainResult:
    """
    Train encoder + category head with cross-entropy and Adam.

    Early stopping monitors held-out accuracy. Without explicit validation
    data a seeded ``holdout_fraction`` of the images is held out.

    Raises:
        DataValidationError: If fewer than two categories are present
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DataValidationError("encoder pretraining needs at least two categories")
    rng = make_rng(cfg.seed, "encoder-train")
    if val_pixels is None or val_labels is None or len(val_labels) == 0:
        order = rng.permutation(len(labels))
        cut = max(1, int(round(len(labels) * cfg.holdout_fraction)))
        held, kept = order[:cut], order[cut:]
        val_pixels, val_labels = pixels[held], labels[held]
        pixels, labels = pixels[kept], labels[kept]

    params = init_encoder(cfg, n_categories)
    state = AdamState.for_params(params)
    stopper = EarlyStopping(cfg.patience, mode="max")
    best = params.copy()
    history: List[Dict[str, float]] = []
    started = time.monotonic()

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(labels))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            graph = Graph(params)
            loss = cross_entropy(classifier_logits(graph, pixels[batch]), labels[batch])
            grads = backward(graph, loss)
            params, state = adam_step(params, grads, state, cfg.lr)
            losses.append(loss.item())
        accuracy = category_accuracy(params, val_pixels, val_labels)
        train_loss = float(np.mean(losses))
        history.append({"epoch": epoch, "train_loss": train_loss, "val_accuracy": accuracy,
                        "elapsed_s": time.monotonic() - started})
        logger.info(f"Encoder epoch {epoch}: loss {train_loss:.4f}, held-out accuracy {accuracy:.4f}")
        if stopper.update(epoch, accuracy):
            best = params.copy()
        if stopper.should_stop:
            logger.info(f"Encoder early stop at epoch {epoch}; best epoch {stopper.best_epoch}")
            break

    return PretrainResult(
        params=best.freeze(),
        best_accuracy=stopper.best_value,
        best_epoch=stopper.best_epoch,
        history=history,
    )


def pretrain_encoder(train_fonts: Sequence[FontRecord], cfg: EncoderConfig,
                     val_fonts: Optional[Sequence[FontRecord]] = None) -> PretrainResult:
    """
    Pretrain the encoder on the category of every training glyph and freeze it.

    Args:
        train_fonts: Fonts whose glyphs form the training images
        cfg: Encoder settings
        val_fonts: Optional held-out fonts for early stopping

    Returns:
        PretrainResult whose ``params`` store is frozen
    """
    if not train_fonts:
        raise DataValidationError("encoder pretraining needs at least one training font")
    n_categories = train_fonts[0].n
    pixels, labels = collect_glyphs(train_fonts)
    val_pixels, val_labels = collect_glyphs(val_fonts or [])
    logger.info(f"Pretraining encoder on {len(labels)} glyphs of {len(train_fonts)} fonts, {n_categories} categories")
    return train_classifier(pixels, labels, n_categories, cfg, val_pixels, val_labels)

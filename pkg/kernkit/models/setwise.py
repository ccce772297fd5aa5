"""
Set-wise transformer: all N^2 pair tokens of a font in, all N^2 spaces out.

Token (i, j) at position i*N + j is a linear projection of ``[f_i | f_j]``.
The projection is applied as two halves gathered per token, which equals the
concatenated form without materialising an (N^2, 2D) matrix. Encoder layers
are post-norm with no positional encoding, so the whole map is equivariant
under a permutation of the glyphs.
"""
import logging
from typing import Tuple

import numpy as np

from kernkit.dataset.records import KerningTable
from kernkit.errors import CapacityError, ShapeError
from kernkit.numerics.params import ParameterStore, uniform_init
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import (
    Graph,
    Tensor,
    add,
    get_dtype,
    layer_norm,
    linear,
    matmul,
    mul,
    relu,
    reshape,
    softmax,
    take,
    transpose,
)
from kernkit.schemas import SetwiseConfig

logger = logging.getLogger(__name__)


def init_setwise(cfg: SetwiseConfig, seed: int = 0) -> ParameterStore:
    """Linear layers uniform in ±1/sqrt(fan_in); layer norms start at gain 1, bias 0."""
    rng = make_rng(seed, "setwise-init")
    dtype = get_dtype()
    d = cfg.d_model
    arrays = {
        "proj.w": uniform_init(rng, (2 * cfg.feature_dim, d), 2 * cfg.feature_dim, dtype),
        "proj.b": uniform_init(rng, (d,), 2 * cfg.feature_dim, dtype),
    }
    for layer in range(cfg.n_layers):
        prefix = f"layer{layer}."
        for name in ("q", "k", "v", "o"):
            arrays[f"{prefix}attn.{name}.w"] = uniform_init(rng, (d, d), d, dtype)
            arrays[f"{prefix}attn.{name}.b"] = uniform_init(rng, (d,), d, dtype)
        arrays[f"{prefix}norm1.g"] = np.ones(d, dtype=dtype)
        arrays[f"{prefix}norm1.b"] = np.zeros(d, dtype=dtype)
        arrays[f"{prefix}ffn1.w"] = uniform_init(rng, (d, cfg.ffn_dim), d, dtype)
        arrays[f"{prefix}ffn1.b"] = uniform_init(rng, (cfg.ffn_dim,), d, dtype)
        arrays[f"{prefix}ffn2.w"] = uniform_init(rng, (cfg.ffn_dim, d), cfg.ffn_dim, dtype)
        arrays[f"{prefix}ffn2.b"] = uniform_init(rng, (d,), cfg.ffn_dim, dtype)
        arrays[f"{prefix}norm2.g"] = np.ones(d, dtype=dtype)
        arrays[f"{prefix}norm2.b"] = np.zeros(d, dtype=dtype)
    arrays["head.norm.g"] = np.ones(d, dtype=dtype)
    arrays["head.norm.b"] = np.zeros(d, dtype=dtype)
    arrays["head.w"] = uniform_init(rng, (d, 1), d, dtype)
    arrays["head.b"] = uniform_init(rng, (1,), d, dtype)
    return ParameterStore(arrays)


def pair_indices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major (i, j) index arrays of the N^2 tokens."""
    first, second = np.divmod(np.arange(n * n), n)
    return first, second


def check_capacity(n: int, cfg: SetwiseConfig) -> None:
    if n * n > cfg.max_tokens:
        raise CapacityError(
            f"{n} categories need {n * n} tokens, above the budget of {cfg.max_tokens}"
        )


def build_pair_tokens(graph: Graph, features: np.ndarray, cfg: SetwiseConfig) -> Tensor:
    """
    Project every ordered glyph pair to a d_model token.

    Args:
        graph: Graph holding set-wise parameters
        features: (B, N, D) or (N, D) feature matrices
        cfg: Architecture settings

    Returns:
        (B, N^2, d_model) tensor (B = 1 for unbatched input)
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 2:
        features = features[None]
    if features.ndim != 3:
        raise ShapeError(f"setwise: features must be (B, N, D), got shape {features.shape}")
    _, n, d = features.shape
    if n < 2:
        raise ShapeError(f"setwise: need at least 2 glyphs, got shape {features.shape}")
    if d != cfg.feature_dim or graph.params["proj.w"].shape[0] != 2 * d:
        raise ShapeError(
            f"setwise: incompatible shapes {features.shape} and {graph.params['proj.w'].shape}"
        )
    check_capacity(n, cfg)
    f = graph.constant(features)
    w = graph.param("proj.w")
    top = matmul(f, take(w, np.arange(d), axis=0))
    bottom = matmul(f, take(w, np.arange(d, 2 * d), axis=0))
    first, second = pair_indices(n)
    return add(add(take(top, first, axis=1), take(bottom, second, axis=1)), graph.param("proj.b"))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, d = x.shape
    return transpose(reshape(x, (b, t, heads, d // heads)), (0, 2, 1, 3))


def self_attention(graph: Graph, x: Tensor, prefix: str, heads: int) -> Tensor:
    """Multi-head scaled dot-product attention over all tokens."""
    b, t, d = x.shape
    q = _split_heads(linear(x, graph.param(f"{prefix}q.w"), graph.param(f"{prefix}q.b")), heads)
    k = _split_heads(linear(x, graph.param(f"{prefix}k.w"), graph.param(f"{prefix}k.b")), heads)
    v = _split_heads(linear(x, graph.param(f"{prefix}v.w"), graph.param(f"{prefix}v.b")), heads)
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d // heads))
    context = matmul(softmax(scores), v)
    merged = reshape(transpose(context, (0, 2, 1, 3)), (b, t, d))
    return linear(merged, graph.param(f"{prefix}o.w"), graph.param(f"{prefix}o.b"))


def encoder_layer(graph: Graph, x: Tensor, prefix: str, heads: int) -> Tensor:
    attended = self_attention(graph, x, f"{prefix}attn.", heads)
    x = layer_norm(add(x, attended), graph.param(f"{prefix}norm1.g"), graph.param(f"{prefix}norm1.b"))
    hidden = relu(linear(x, graph.param(f"{prefix}ffn1.w"), graph.param(f"{prefix}ffn1.b")))
    ff = linear(hidden, graph.param(f"{prefix}ffn2.w"), graph.param(f"{prefix}ffn2.b"))
    return layer_norm(add(x, ff), graph.param(f"{prefix}norm2.g"), graph.param(f"{prefix}norm2.b"))


def setwise_graph(graph: Graph, features: np.ndarray, cfg: SetwiseConfig) -> Tensor:
    """
    Forward a batch of fonts.

    Args:
        graph: Graph holding set-wise parameters
        features: (B, N, D) feature matrices
        cfg: Architecture settings

    Returns:
        (B, N, N) predicted tables
    """
    x = build_pair_tokens(graph, features, cfg)
    b, t, _ = x.shape
    n = int(round(np.sqrt(t)))
    for layer in range(cfg.n_layers):
        x = encoder_layer(graph, x, f"layer{layer}.", cfg.n_heads)
    x = layer_norm(x, graph.param("head.norm.g"), graph.param("head.norm.b"))
    out = linear(x, graph.param("head.w"), graph.param("head.b"))
    return reshape(out, (b, n, n))


def setwise_forward(params: ParameterStore, features: np.ndarray, cfg: SetwiseConfig,
                    labels: tuple = ()) -> KerningTable:
    """Predict one font's N x N table from its (N, D) feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f"setwise: features must be (N, D), got shape {features.shape}")
    table = setwise_graph(Graph(params), features[None], cfg).data[0]
    return KerningTable(table.astype(np.float64), labels)

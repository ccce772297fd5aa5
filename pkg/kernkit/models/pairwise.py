"""
Pairwise conditional regressor: one space from two glyph features and their categories.

Input layout is ``[f_i | f_j | onehot(i) | onehot(j)]`` followed by three
fully-connected layers with ReLU between them.
"""
import logging
from typing import Optional

import numpy as np

from kernkit.dataset.records import KerningTable
from kernkit.errors import DataValidationError, ShapeError
from kernkit.numerics.params import ParameterStore, uniform_init
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import Graph, Tensor, get_dtype, linear, relu, reshape
from kernkit.schemas import PairwiseConfig

logger = logging.getLogger(__name__)

LAYERS = ("fc1", "fc2", "fc3")


def init_pairwise(cfg: PairwiseConfig, seed: int = 0) -> ParameterStore:
    rng = make_rng(seed, "pairwise-init")
    dtype = get_dtype()
    widths = (cfg.input_dim, *cfg.hidden, 1)
    arrays = {}
    for name, fan_in, fan_out in zip(LAYERS, widths[:-1], widths[1:]):
        arrays[f"{name}.w"] = uniform_init(rng, (fan_in, fan_out), fan_in, dtype)
        arrays[f"{name}.b"] = uniform_init(rng, (fan_out,), fan_in, dtype)
    return ParameterStore(arrays)


def pairwise_categories(params: ParameterStore, feature_dim: int) -> int:
    """Category count N implied by the first layer width and D."""
    input_dim = params["fc1.w"].shape[0]
    n2 = input_dim - 2 * feature_dim
    if n2 <= 0 or n2 % 2:
        raise ShapeError(
            f"pairwise: feature length {feature_dim} is incompatible with input width {input_dim}"
        )
    return n2 // 2


def pairwise_inputs(features: np.ndarray, first: np.ndarray, second: np.ndarray,
                    n_categories: int) -> np.ndarray:
    """
    Build input rows for the given (first, second) category pairs of one font.

    Args:
        features: (N, D) feature matrix of the font
        first: (B,) categories of the left letters
        second: (B,) categories of the right letters
        n_categories: N used for the one-hot conditions

    Returns:
        (B, 2D + 2N) float64 array
    """
    first = np.asarray(first, dtype=np.intp)
    second = np.asarray(second, dtype=np.intp)
    for categories in (first, second):
        if categories.size and (categories.min() < 0 or categories.max() >= n_categories):
            raise DataValidationError(f"category out of range [0, {n_categories})")
    eye = np.eye(n_categories)
    return np.concatenate(
        [features[first], features[second], eye[first], eye[second]], axis=1
    ).astype(np.float64)


def pairwise_graph(graph: Graph, inputs: np.ndarray) -> Tensor:
    """Forward over a (B, 2D + 2N) input batch; returns (B,) spaces."""
    x = graph.constant(inputs)
    width = graph.params["fc1.w"].shape[0]
    if x.shape[-1] != width:
        raise ShapeError(f"pairwise: incompatible shapes {x.shape} and {graph.params['fc1.w'].shape}")
    h = relu(linear(x, graph.param("fc1.w"), graph.param("fc1.b")))
    h = relu(linear(h, graph.param("fc2.w"), graph.param("fc2.b")))
    out = linear(h, graph.param("fc3.w"), graph.param("fc3.b"))
    return reshape(out, (x.shape[0],))


def pairwise_forward(params: ParameterStore, f_i: np.ndarray, f_j: np.ndarray, i: int, j: int) -> float:
    """Space of the pair (i, j). Order matters: (i, j) and (j, i) are different pairs."""
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    if f_i.shape != f_j.shape or f_i.ndim != 1:
        raise ShapeError(f"pairwise: incompatible shapes {f_i.shape} and {f_j.shape}")
    n = pairwise_categories(params, f_i.shape[0])
    if not (0 <= i < n and 0 <= j < n):
        raise DataValidationError(f"category out of range [0, {n}): ({i}, {j})")
    eye = np.eye(n)
    inputs = np.concatenate([f_i, f_j, eye[i], eye[j]])[None, :]
    return float(pairwise_graph(Graph(params), inputs).data[0])


def predict_table_pairwise(params: ParameterStore, features: np.ndarray,
                           labels: Optional[tuple] = None) -> KerningTable:
    """
    Predict the full N x N table with N^2 pairwise evaluations.

    Args:
        params: Pairwise parameters
        features: (N, D) feature matrix, row k for category k
        labels: Optional category labels for the table
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f"pairwise: features must be (N, D), got shape {features.shape}")
    n = features.shape[0]
    expected = pairwise_categories(params, features.shape[1])
    if expected != n:
        raise ShapeError(f"pairwise: model expects {expected} categories, got features of shape {features.shape}")
    first, second = np.divmod(np.arange(n * n), n)
    spaces = pairwise_graph(Graph(params), pairwise_inputs(features, first, second, n)).data
    return KerningTable(spaces.astype(np.float64).reshape(n, n), labels or ())

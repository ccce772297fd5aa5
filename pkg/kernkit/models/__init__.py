"""Pairwise regressor and set-wise transformer kerning models."""
from kernkit.models.pairwise import (
    init_pairwise,
    pairwise_forward,
    pairwise_graph,
    pairwise_inputs,
    predict_table_pairwise,
)
from kernkit.models.setwise import (
    build_pair_tokens,
    init_setwise,
    pair_indices,
    setwise_forward,
    setwise_graph,
)

__all__ = [
    "build_pair_tokens",
    "init_pairwise",
    "init_setwise",
    "pair_indices",
    "pairwise_forward",
    "pairwise_graph",
    "pairwise_inputs",
    "predict_table_pairwise",
    "setwise_forward",
    "setwise_graph",
]

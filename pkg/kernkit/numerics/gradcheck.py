"""
Finite-difference verification of analytic gradients.
"""
import logging
from typing import Callable

import numpy as np

from kernkit.numerics.params import ParameterStore
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import Graph, Tensor, backward, float_mode

logger = logging.getLogger(__name__)

LossFn = Callable[[Graph], Tensor]


def _loss_value(loss_fn: LossFn, params: ParameterStore) -> float:
    return loss_fn(Graph(params)).item()


def grad_check(loss_fn: LossFn, params: ParameterStore, sample_count: int = 32, seed: int = 0) -> float:
    """
    Compare backward() against central finite differences.

    Runs in float64 regardless of the current mode. Checked scalars are
    drawn uniformly without replacement; every scalar is checked when there
    are fewer than ``sample_count``.

    Args:
        loss_fn: Builds a scalar loss on the given graph (read parameters via ``graph.param``)
        params: Parameters to check
        sample_count: Number of scalar parameters to check
        seed: Seed for the scalar selection

    Returns:
        Max over the checked scalars of |analytic - numeric| / max(1e-12, |analytic| + |numeric|)
    """
    with float_mode("float64"):
        work = params.astype(np.float64)
        work.frozen = False
        graph = Graph(work)
        analytic = backward(graph, loss_fn(graph))

        names = list(work)
        sizes = np.array([work[name].size for name in names])
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        total = int(offsets[-1])
        rng = make_rng(seed, "gradcheck")
        picks = np.sort(rng.choice(total, size=min(sample_count, total), replace=False))

        worst = 0.0
        for flat_index in picks:
            slot = int(np.searchsorted(offsets, flat_index, side="right") - 1)
            name = names[slot]
            local = int(flat_index - offsets[slot])
            array = work[name]
            theta = float(array.flat[local])
            h = 1e-6 * (1.0 + abs(theta))

            array.flat[local] = theta + h
            plus = _loss_value(loss_fn, work)
            array.flat[local] = theta - h
            minus = _loss_value(loss_fn, work)
            array.flat[local] = theta

            numeric = (plus - minus) / (2.0 * h)
            exact = float(analytic[name].flat[local])
            error = abs(exact - numeric) / max(1e-12, abs(exact) + abs(numeric))
            if error > worst:
                logger.debug(f"grad_check: {name}[{local}] analytic={exact:.6e} numeric={numeric:.6e}")
            worst = max(worst, error)

    logger.info(f"grad_check: {len(picks)} scalars, max relative error {worst:.3e}")
    return worst

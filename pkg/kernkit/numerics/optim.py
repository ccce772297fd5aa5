"""
Adam optimiser.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from kernkit.errors import ConfigError, NumericError, ShapeError
from kernkit.numerics.params import ParameterStore

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators per parameter and the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: ParameterStore) -> "AdamState":
        return cls(
            m={name: np.zeros_like(value) for name, value in params.items()},
            v={name: np.zeros_like(value) for name, value in params.items()},
            t=0,
        )


def adam_step(
    params: ParameterStore,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> Tuple[ParameterStore, AdamState]:
    """
    Apply one bias-corrected Adam update.

    Inputs are left untouched; the updated parameters and state are returned
    as new objects. ``lr = 0`` is a valid no-op step that still advances ``t``.

    Args:
        params: Current parameters
        grads: Gradient per parameter name (same shapes)
        state: Current optimiser state
        lr: Learning rate (>= 0)

    Returns:
        Tuple of (new parameters, new state)

    Raises:
        NumericError: If any gradient is not finite or the store is frozen
        ShapeError: If a gradient does not match its parameter's shape
    """
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if params.frozen:
        raise NumericError("cannot update a frozen parameter store")
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            raise KeyError(f"Missing gradient for parameter '{name}'")
        if grad.shape != value.shape:
            raise ShapeError(f"adam_step: incompatible shapes {value.shape} and {grad.shape} for '{name}'")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for '{name}'; step rejected")

    t = state.t + 1
    correction1 = 1.0 - BETA1 ** t
    correction2 = 1.0 - BETA2 ** t
    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=value.dtype)
        m = BETA1 * state.m[name] + (1.0 - BETA1) * grad
        v = BETA2 * state.v[name] + (1.0 - BETA2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = (value - lr * m_hat / (np.sqrt(v_hat) + EPSILON)).astype(value.dtype)
        new_m[name] = m.astype(value.dtype)
        new_v[name] = v.astype(value.dtype)
    return ParameterStore(new_params), AdamState(m=new_m, v=new_v, t=t)


class EarlyStopping:
    """
    Patience-based stopping on a monitored value.

    The first reported epoch sets the initial best; training stops once
    ``patience`` consecutive epochs fail to improve strictly on it.
    """

    def __init__(self, patience: int, mode: str = "min"):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        if mode not in ("min", "max"):
            raise ValueError(f"mode must be 'min' or 'max', got '{mode}'")
        self.patience = patience
        self.mode = mode
        self.best_value: float = float("inf") if mode == "min" else float("-inf")
        self.best_epoch: int = -1
        self.bad_epochs = 0

    def _improves(self, value: float) -> bool:
        return value < self.best_value if self.mode == "min" else value > self.best_value

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch; returns True when it is the new best."""
        if self.best_epoch < 0 or self._improves(value):
            self.best_value = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience

"""Dense tensor maths, reverse-mode autodiff and the Adam optimiser."""
from kernkit.numerics.gradcheck import grad_check
from kernkit.numerics.optim import AdamState, EarlyStopping, adam_step
from kernkit.numerics.params import ParameterStore, uniform_init
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import (
    Graph,
    Tensor,
    backward,
    float_mode,
    get_dtype,
    get_float_mode,
    set_float_mode,
)

__all__ = [
    "AdamState",
    "EarlyStopping",
    "Graph",
    "ParameterStore",
    "Tensor",
    "adam_step",
    "backward",
    "float_mode",
    "get_dtype",
    "get_float_mode",
    "grad_check",
    "make_rng",
    "set_float_mode",
    "uniform_init",
]

from .tensor import NonFiniteError, ShapeError, Tape, Tensor, active_tape, as_tensor, backward
from .ops import (
    add, clip, concat, dropout, exp, gelu, getitem, layer_norm, log, matmul, mean, minimum,
    mul, relu, reshape, softmax, square, stack, sub, sum, swap_last, take_rows, tanh, transpose,
)
from .optim import OptimState, adamw_step, clip_grad_norm, effective_lr
from .gradcheck import numerical_grad, relative_error
from .nn import Linear, MLP, Parameterized, init_linear

__all__ = [
    "NonFiniteError", "ShapeError", "Tape", "Tensor", "active_tape", "as_tensor", "backward",
    "add", "clip", "concat", "dropout", "exp", "gelu", "getitem", "layer_norm", "log", "matmul",
    "mean", "minimum", "mul", "relu", "reshape", "softmax", "square", "stack", "sub", "sum",
    "swap_last", "take_rows", "tanh", "transpose",
    "OptimState", "adamw_step", "clip_grad_norm", "effective_lr",
    "numerical_grad", "relative_error",
    "Linear", "MLP", "Parameterized", "init_linear",
]

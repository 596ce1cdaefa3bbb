"""Minimal reverse-mode autodiff, Adam, and seeded RNG streams."""

from .gradcheck import check_gradients, numerical_grad, rel_error
from .optim import Adam
from .rng import make_rng, split_rngs
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    clamp_min,
    concat,
    conv1d_same,
    cosine,
    div,
    euclidean_distance,
    exp,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    normalize,
    relu,
    reshape,
    softmax,
    square,
    stack,
    sub,
    sum_,
    swapaxes,
    take,
    tanh,
)

__all__ = [
    "Adam", "Tensor", "add", "as_tensor", "backward", "check_gradients", "clamp_min",
    "concat", "conv1d_same", "cosine", "div", "euclidean_distance", "exp", "log",
    "make_rng", "matmul", "mean", "mul", "no_grad", "normalize", "numerical_grad",
    "rel_error", "relu", "reshape", "softmax", "split_rngs", "square", "stack", "sub",
    "sum_", "swapaxes", "take", "tanh",
]

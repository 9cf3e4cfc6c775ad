"""Minimal reverse-mode differentiation engine and neural primitives."""

from .engine import (GradientError, ShapeError, Tape, Tensor, add, backward,
                     concat, dropout, embed_row, matmul, matvec, mean, mul,
                     scale, stack_rows, sub, sigmoid, tanh, transpose, tsum, vecmat)
from .nn import (GruWeights, additive_attention, affine, gru_cell,
                 mixed_softmax_nll, softmax_nll)
from .optim import Adam, TrainingError, adam_step, clip_global_norm, sgd_step
from .params import ParameterStore

__all__ = [
    "Adam", "GradientError", "GruWeights", "ParameterStore", "ShapeError",
    "Tape", "Tensor", "TrainingError", "adam_step", "add",
    "additive_attention", "affine", "backward", "clip_global_norm", "concat",
    "dropout", "embed_row", "gru_cell", "matmul", "matvec", "mean",
    "mixed_softmax_nll", "mul", "scale", "sgd_step", "sigmoid", "softmax_nll",
    "stack_rows", "sub", "tanh", "transpose", "tsum", "vecmat",
]

"""Minimal dense-network numerics: tensors, tape, layers, Adam, checkpoints."""

from .attention import TargetAttention
from .checkpoint import load_checkpoint, save_checkpoint
from .params import (
    GradientSet,
    Parameter,
    ParamStore,
    adam_step,
    backward,
    backward_multi,
    embedding_init,
    glorot_uniform,
)
from .tensor import (
    ACTIVATIONS,
    accumulate_multi,
    Tape,
    Tensor,
    add,
    broadcast_to,
    clip_,
    concat,
    dense_forward,
    detach,
    embedding_lookup,
    exp,
    log,
    log_softmax,
    masked_softmax,
    matmul,
    mean_,
    mul,
    neg,
    recording,
    relu,
    reshape,
    scale,
    select_index,
    sigmoid,
    softmax,
    sub,
    sum_,
    swish,
)

__all__ = [
    "ACTIVATIONS",
    "GradientSet",
    "Parameter",
    "ParamStore",
    "Tape",
    "TargetAttention",
    "Tensor",
    "accumulate_multi",
    "adam_step",
    "add",
    "backward",
    "backward_multi",
    "broadcast_to",
    "clip_",
    "concat",
    "dense_forward",
    "detach",
    "embedding_init",
    "embedding_lookup",
    "exp",
    "glorot_uniform",
    "load_checkpoint",
    "log",
    "log_softmax",
    "masked_softmax",
    "matmul",
    "mean_",
    "mul",
    "neg",
    "recording",
    "relu",
    "reshape",
    "save_checkpoint",
    "scale",
    "select_index",
    "sigmoid",
    "softmax",
    "sub",
    "sum_",
    "swish",
]

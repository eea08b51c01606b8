from .tensor import Parameter, Tensor, concat, finite_checks, getitem, matmul, mean, reshape, sum_, transpose
from .ops import (
    AttentionMask,
    AttentionParams,
    LAYER_NORM_EPS,
    conv2d,
    cross_entropy,
    gelu,
    layer_norm,
    linear,
    masked_mha,
    sinusoidal_pe,
    softmax,
)
from .optim import AdamW, adamw_step
from .gradcheck import grad_check
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .init import trunc_normal

__all__ = [
    "AdamW",
    "AttentionMask",
    "AttentionParams",
    "CheckpointError",
    "LAYER_NORM_EPS",
    "Parameter",
    "Tensor",
    "adamw_step",
    "concat",
    "conv2d",
    "cross_entropy",
    "finite_checks",
    "gelu",
    "getitem",
    "grad_check",
    "layer_norm",
    "linear",
    "load_checkpoint",
    "masked_mha",
    "matmul",
    "mean",
    "reshape",
    "save_checkpoint",
    "sinusoidal_pe",
    "softmax",
    "sum_",
    "transpose",
    "trunc_normal",
]

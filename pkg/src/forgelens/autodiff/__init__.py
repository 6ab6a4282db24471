from .gradcheck import grad_check
from .kernels import BACKEND as KERNEL_BACKEND
from .ops import (
    attention,
    conv2d,
    conv_transpose2d,
    embedding,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    matmul,
    multi_head_attention,
    softmax,
)
from .tensor import (
    Tensor,
    add,
    clip,
    concat,
    div,
    exp,
    gelu,
    inference_mode,
    log,
    mul,
    narrow,
    neg,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    sqrt,
    sub,
    transpose,
    unbroadcast,
)

__all__ = [
    "Tensor",
    "KERNEL_BACKEND",
    "add",
    "attention",
    "clip",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "div",
    "embedding",
    "exp",
    "gelu",
    "grad_check",
    "inference_mode",
    "l2_normalize",
    "layer_norm",
    "linear",
    "log",
    "log_softmax",
    "matmul",
    "mul",
    "multi_head_attention",
    "narrow",
    "neg",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "sigmoid",
    "softmax",
    "sqrt",
    "sub",
    "transpose",
    "unbroadcast",
]

"""Deterministic tensor core: autodiff, optimizer, RNG, FD oracle, file formats."""
from .fdcheck import fd_check
from .optim import adam_step
from .params import ParamStore, forward_backward
from .rng import ALGORITHM, RngStream
from .serialize import (FormatError, load_checkpoint, load_tensor,
                        save_checkpoint, save_tensor, tensor_bytes,
                        tensor_from_bytes)
from .tensor import (ConfigError, NumericsError, ShapeError, Tensor, add,
                     affine, concat, cosine_sim, cross_entropy, exp, gelu,
                     layer_norm, log, matmul, mse, mul, neg, no_grad, relu,
                     reshape, softmax, sub, tmean, transpose, tsum)

__all__ = [
    "ALGORITHM", "ConfigError", "FormatError", "NumericsError", "ParamStore",
    "RngStream", "ShapeError", "Tensor", "adam_step", "add", "affine",
    "concat", "cosine_sim", "cross_entropy", "exp", "fd_check",
    "forward_backward", "gelu", "layer_norm", "load_checkpoint",
    "load_tensor", "log", "matmul", "mse", "mul", "neg", "no_grad", "relu",
    "reshape", "save_checkpoint", "save_tensor", "softmax", "sub",
    "tensor_bytes", "tensor_from_bytes", "tmean", "transpose", "tsum",
]

"""Minimal dense-tensor reverse-mode autodiff engine."""

from . import ops
from .fdcheck import CheckReport, check_gradients, rel_err
from .optim import SgdPoly, poly_lr, sgd_poly_step
from .tensor import (Tape, Tensor, backward, counters, default_dtype, get_precision,
                     ones, param, precision, set_precision, tensor, trace, zeros)

__all__ = [
    "Tape", "Tensor", "backward", "counters", "default_dtype", "get_precision",
    "ones", "param", "precision", "set_precision", "tensor", "trace", "zeros",
    "ops", "SgdPoly", "poly_lr", "sgd_poly_step",
    "CheckReport", "check_gradients", "rel_err",
]

"""Deterministic differentiable operator core."""

from . import functional
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .modules import BatchNorm2d, Conv2d, ConvBnRelu, Linear, Module, Sequential
from .optim import Adam, LrSchedule
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "functional",
    "Tensor",
    "Parameter",
    "no_grad",
    "Module",
    "Conv2d",
    "Linear",
    "BatchNorm2d",
    "Sequential",
    "ConvBnRelu",
    "Adam",
    "LrSchedule",
    "grad_check",
    "GradCheckReport",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint",
]

"""Tensor/autodiff engine, layers, optimizer, training loop, serialization."""

from . import autograd, layers, optim, training, serialization, attention  # noqa: F401
from .autograd import Tensor, no_grad  # noqa: F401

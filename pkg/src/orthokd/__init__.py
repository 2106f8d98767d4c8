"""Orthogonal-projection feature distillation.

Submodules: ``linalg`` (dense kernels, matrix exponential and its
Fréchet derivative), ``projector``, ``normalizer``, ``distill`` (loss and
diagnostics), ``nets``, ``trainer``, ``io`` and ``cli``.
"""
from ._backend import NAME as KERNEL_BACKEND
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    OrthoKDError,
    PreconditionError,
    ShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "ConfigError",
    "DataError",
    "FormatError",
    "NumericError",
    "OrthoKDError",
    "PreconditionError",
    "ShapeError",
]

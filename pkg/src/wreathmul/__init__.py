"""Recursive bilinear and wreath-product (STP) matrix multiplication with forward-error bounds."""

from .matcore import Matrix, NormKind, Precision, naive_multiply, norm
from .bilinear import (
    BilinearScheme,
    Schedule,
    multiply_nonstationary,
    multiply_stationary,
    scheme_stats,
    strassen_scheme,
    verify_scheme,
)
from .stpalg import build_config, stp_multiply

__all__ = [
    "BilinearScheme",
    "Matrix",
    "NormKind",
    "Precision",
    "Schedule",
    "build_config",
    "multiply_nonstationary",
    "multiply_stationary",
    "naive_multiply",
    "norm",
    "scheme_stats",
    "stp_multiply",
    "strassen_scheme",
    "verify_scheme",
]

__version__ = "0.1.0"

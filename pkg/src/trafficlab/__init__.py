"""Stochastic traffic-flow models with paired analytic and simulation routes."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

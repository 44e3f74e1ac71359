"""Workload of single-server queues fed by randomly scattered arrivals.

Exact simulation, fluid and diffusion limits, transient laws of reflected
Gaussian processes, tail asymptotics, large deviations with importance
sampling, and the periodic variant.
"""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .core import RandomStream, ScatterModel, ServiceModel
from .errors import DomainError, PreconditionError, RootNotFoundError

__all__ = ["__version__", "RandomStream", "ScatterModel", "ServiceModel", "DomainError",
           "PreconditionError", "RootNotFoundError"]

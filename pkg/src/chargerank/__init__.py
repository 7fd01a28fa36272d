"""Predict and rank the popularity of EV charging-pool sites from GIS context."""

__version__ = "0.1.0"

from chargerank._kernels import kernel_backend

__all__ = ["kernel_backend", "__version__"]

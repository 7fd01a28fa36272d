"""Kernel dispatch: compiled Cython extension with a pure-numpy fallback.

The compiled backend is preferred when importable. Set the environment
variable ``CHARGERANK_KERNELS=pure`` (or ``compiled``) to force a backend;
forcing ``compiled`` raises if the extension is missing instead of silently
degrading.
"""

from __future__ import annotations

import os

from chargerank._kernels import _pure


def load_backend(name: str):
    """Return the kernel module for ``name`` ('pure' or 'compiled')."""
    if name == "pure":
        return _pure
    if name == "compiled":
        from chargerank._kernels import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    forced = os.environ.get("CHARGERANK_KERNELS", "").strip().lower()
    if forced:
        return load_backend(forced)
    try:
        return load_backend("compiled")
    except ImportError:
        return _pure


_impl = _select()

convex_clip_area = _impl.convex_clip_area
best_split = _impl.best_split
logistic_lasso_path = _impl.logistic_lasso_path


def kernel_backend() -> str:
    """Name of the kernel backend selected at import ('compiled' or 'pure')."""
    return _impl.BACKEND_NAME

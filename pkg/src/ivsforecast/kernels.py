"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set ``IVSFORECAST_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import _pykernels

try:
    if os.environ.get("IVSFORECAST_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

ets_filter = _impl.ets_filter
ets_sse_grad = _impl.ets_sse_grad
arma_css = _impl.arma_css
best_split = _impl.best_split
block_bootstrap_means = _impl.block_bootstrap_means


def available_backends():
    """Names of the kernel implementations importable in this environment."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def backend_module(name):
    """Return the kernel module for ``name`` (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")

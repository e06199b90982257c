"""Hot numeric kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; set ``SSCL_BACKEND=python``
to force the fallback. Both backends expose the same functions.
"""
import importlib
import os

from . import _pykernels

_ENV = os.environ.get("SSCL_BACKEND", "auto").strip().lower()


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module(f"{__name__}._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if _ENV == "python":
    _impl = _pykernels
else:
    try:
        _impl = load_backend("cython")
    except ImportError:
        if _ENV == "cython":
            raise
        _impl = _pykernels

BACKEND = _impl.NAME
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
softmax_rows = _impl.softmax_rows
xent_rows = _impl.xent_rows
soft_xent_rows = _impl.soft_xent_rows
qp_dual_pg = _impl.qp_dual_pg

__all__ = [
    "BACKEND",
    "available_backends",
    "load_backend",
    "mlp_forward",
    "mlp_backward",
    "softmax_rows",
    "xent_rows",
    "soft_xent_rows",
    "qp_dual_pg",
]

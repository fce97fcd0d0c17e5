"""Optional numba acceleration.

Kernels are decorated with :func:`njit`.  When numba is missing, or when the
environment variable ``SCATTERLAB_NO_NUMBA`` is set to a non-empty value other
than ``0``, the decorator is the identity and the kernels run as plain
numpy/python code.
"""

import os

_disabled = os.environ.get("SCATTERLAB_NO_NUMBA", "") not in ("", "0")

try:
    if _disabled:
        raise ImportError
    import numba as _numba

    # the portable work-queue layer avoids version checks on system TBB builds
    _numba.config.THREADING_LAYER = os.environ.get("NUMBA_THREADING_LAYER", "workqueue")
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    _numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", False)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(fn):
        return fn

    return wrap


prange = _numba.prange if HAVE_NUMBA else range


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"

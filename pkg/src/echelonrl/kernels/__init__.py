"""Numeric kernel backend selection.

The compiled extension (``_cyops``) is used when it imported cleanly; the
numpy reference (``pyref``) is the fallback. Set ECHELONRL_KERNELS=python
or =cython to force a backend (forcing cython fails loudly if the extension
is missing). The choice is made once at import time and is recorded in run
metadata, since the two backends differ in floating-point summation order.
"""

import os

from . import pyref

_requested = os.environ.get("ECHELONRL_KERNELS", "auto")

if _requested == "python":
    _impl = pyref
elif _requested == "cython":
    from . import _cyops as _impl
elif _requested == "auto":
    try:
        from . import _cyops as _impl
    except ImportError:
        _impl = pyref
else:
    raise ValueError(
        f"ECHELONRL_KERNELS must be auto, python or cython, got {_requested!r}")

BACKEND = _impl.NAME
affine = _impl.affine
affine_backward = _impl.affine_backward
tanh_forward = _impl.tanh_forward
tanh_backward = _impl.tanh_backward
sigmoid_forward = _impl.sigmoid_forward
lstm_cell_forward = _impl.lstm_cell_forward
lstm_cell_backward = _impl.lstm_cell_backward
adam_step = _impl.adam_step

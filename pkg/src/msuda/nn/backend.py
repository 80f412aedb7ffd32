"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy implementation
is the fallback. MSUDA_KERNEL_BACKEND=compiled|numpy forces the choice
(forcing "compiled" when the extension is missing is an error; everything
else degrades silently).
"""

import os

from . import _conv_numpy

try:
    from . import _convkernels as _compiled
except ImportError:
    _compiled = None


def _select():
    forced = os.environ.get("MSUDA_KERNEL_BACKEND", "").strip().lower()
    if forced == "numpy":
        return _conv_numpy
    if forced == "compiled":
        if _compiled is None:
            raise ImportError(
                "MSUDA_KERNEL_BACKEND=compiled but the msuda.nn._convkernels "
                "extension is not built"
            )
        return _compiled
    if forced:
        raise ValueError(f"MSUDA_KERNEL_BACKEND: unknown backend {forced!r}")
    return _compiled if _compiled is not None else _conv_numpy


_impl = _select()

ACTIVE_BACKEND = _impl.BACKEND_NAME
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward


def available_backends():
    names = ["numpy"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return tuple(names)

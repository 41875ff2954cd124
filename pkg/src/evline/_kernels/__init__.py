"""Hot per-event kernels with a compiled core and a numpy fallback.

The compiled Cython extension is preferred when it imported successfully;
set EVLINE_KERNEL_BACKEND=numpy (or =cython) to force a choice.  Both
backends expose the same functions and agree to machine precision.
"""

import os

from . import _celc_numpy

_requested = os.environ.get("EVLINE_KERNEL_BACKEND", "").lower()

_impl = None
if _requested != "numpy":
    try:
        from . import _celc as _impl
    except ImportError:
        _impl = None
        if _requested == "cython":
            raise ImportError(
                "EVLINE_KERNEL_BACKEND=cython but the compiled extension "
                "is not available; build it or unset the variable"
            )

if _impl is None:
    _impl = _celc_numpy
    BACKEND = "numpy"
else:
    BACKEND = "cython"

celc_rows = _impl.celc_rows
celc_matrices = _impl.celc_matrices


def backend_name():
    """Name of the kernel backend selected at import ('cython' or 'numpy')."""
    return BACKEND

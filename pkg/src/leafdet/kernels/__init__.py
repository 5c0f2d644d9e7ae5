"""Hot array kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from ``LEAFDET_BACKEND``:

* unset      -> numba if importable, else numpy
* ``numba``  -> numba, error if unavailable
* ``numpy``  -> pure numpy

``benchmarks/bench_kernels.py`` times the two side by side.
"""

import os

_requested = os.environ.get("LEAFDET_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "numba"):
    raise RuntimeError(
        f"LEAFDET_BACKEND={_requested!r} not understood (use 'numpy' or 'numba')")

if _requested == "numpy":
    from . import np_backend as _impl
    BACKEND = "numpy"
else:
    try:
        from . import nb_backend as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import np_backend as _impl
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_weight = _impl.conv2d_backward_weight
max_pool_forward = _impl.max_pool_forward
max_pool_backward = _impl.max_pool_backward
bilinear_forward = _impl.bilinear_forward
bilinear_backward = _impl.bilinear_backward
deform_conv_forward = _impl.deform_conv_forward
deform_conv_backward = _impl.deform_conv_backward

__all__ = [
    "BACKEND",
    "conv2d_forward", "conv2d_backward_input", "conv2d_backward_weight",
    "max_pool_forward", "max_pool_backward",
    "bilinear_forward", "bilinear_backward",
    "deform_conv_forward", "deform_conv_backward",
]

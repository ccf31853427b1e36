"""Kernel backend selection.

Tries the compiled Cython module first and falls back to the numpy
implementation when the extension was not built. Both expose the same four
functions with the same contracts; `BACKEND` reports which one is live so
benchmarks and bug reports can name it.
"""

try:
    from . import _core as _impl
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _fallback as _impl
    BACKEND = "fallback"

from . import _fallback as fallback  # always importable, used by benchmarks

conv2d_forward = _impl.conv2d_forward
conv2d_backward_kernel = _impl.conv2d_backward_kernel
conv2d_backward_input = _impl.conv2d_backward_input
edt_sq = _impl.edt_sq

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward_kernel",
    "conv2d_backward_input",
    "edt_sq",
    "fallback",
]

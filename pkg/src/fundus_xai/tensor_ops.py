"""Array primitives for the micro CNN and the heatmap pipeline.

Conventions: images and feature maps are float64 numpy arrays in HWC layout,
convolution kernels are (kh, kw, c_in, c_out), flat indices are row-major
over (h, w, c). Everything here is deterministic and allocation-explicit;
the convolution inner loops live in the _kernels backend.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import ArgumentError, ShapeError


def _as_f64(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of an HWC input with a (kh, kw, c_in, c_out) kernel."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects HWC input and 4-d kernel, got "
                         f"{x.shape} and {kernel.shape}")
    if kernel.shape[2] != x.shape[2]:
        raise ShapeError(f"kernel input channels {kernel.shape[2]} do not match "
                         f"input channels {x.shape[2]}")
    if bias.shape != (kernel.shape[3],):
        raise ShapeError(f"bias shape {bias.shape} does not match "
                         f"{kernel.shape[3]} output channels")
    if stride < 1 or padding < 0:
        raise ArgumentError("conv2d needs stride >= 1 and padding >= 0")
    if kernel.shape[0] > x.shape[0] + 2 * padding or kernel.shape[1] > x.shape[1] + 2 * padding:
        raise ShapeError(f"kernel {kernel.shape[:2]} larger than padded input "
                         f"{(x.shape[0] + 2 * padding, x.shape[1] + 2 * padding)}")
    return _kernels.conv2d_forward(_as_f64(x), _as_f64(kernel), _as_f64(bias),
                                   int(stride), int(padding))


def conv2d_backward_input(grad_out: np.ndarray, kernel: np.ndarray,
                          stride: int, padding: int,
                          in_shape: tuple[int, int]) -> np.ndarray:
    return _kernels.conv2d_backward_input(_as_f64(grad_out), _as_f64(kernel),
                                          int(stride), int(padding),
                                          int(in_shape[0]), int(in_shape[1]))


def conv2d_backward_kernel(x: np.ndarray, grad_out: np.ndarray,
                           stride: int, padding: int,
                           kernel_hw: tuple[int, int]) -> np.ndarray:
    return _kernels.conv2d_backward_kernel(_as_f64(x), _as_f64(grad_out),
                                           int(stride), int(padding),
                                           int(kernel_hw[0]), int(kernel_hw[1]))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def max_pool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pooling with ceil semantics on odd dims.

    Returns (pooled, argmax) where argmax holds, per output cell, the flat
    row-major (h, w, c) index of the winning input cell. Ties go to the
    lowest flat index; ragged edge windows cover only the cells that exist.
    """
    if x.ndim != 3:
        raise ShapeError(f"max_pool2 expects an HWC tensor, got {x.shape}")
    h, w, c = x.shape
    out_h, out_w = (h + 1) // 2, (w + 1) // 2
    padded = np.full((out_h * 2, out_w * 2, c), -np.inf)
    padded[:h, :w] = x
    # window cells ordered (0,0),(0,1),(1,0),(1,1): ascending flat index,
    # so argmax's first-hit rule implements the tie break
    win = padded.reshape(out_h, 2, out_w, 2, c).transpose(0, 2, 4, 1, 3)
    win = win.reshape(out_h, out_w, c, 4)
    local = np.argmax(win, axis=3)
    pooled = np.take_along_axis(win, local[..., None], axis=3)[..., 0]
    oy = np.arange(out_h)[:, None, None]
    ox = np.arange(out_w)[None, :, None]
    cc = np.arange(c)[None, None, :]
    iy = oy * 2 + local // 2
    ix = ox * 2 + local % 2
    argmax = (iy * w + ix) * c + cc
    return pooled, argmax.astype(np.int64)


def max_unpool2(grad_out: np.ndarray, argmax: np.ndarray,
                in_shape: tuple[int, int, int]) -> np.ndarray:
    """Scatter pooled-output gradients back to the winning input cells."""
    grad_in = np.zeros(int(np.prod(in_shape)))
    grad_in[argmax.ravel()] = grad_out.ravel()  # winners are distinct cells
    return grad_in.reshape(in_shape)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects an HWC tensor, got {x.shape}")
    return x.mean(axis=(0, 1))


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.shape != (weights.shape[0],) or bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense shapes incompatible: x {x.shape}, "
                         f"weights {weights.shape}, bias {bias.shape}")
    return x @ weights + bias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over a 1-d logit vector."""
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def log_sum_exp(logits: np.ndarray) -> float:
    m = float(np.max(logits))
    return m + float(np.log(np.sum(np.exp(logits - m))))


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers (align_corners=False).

    Source coordinate for output index i is (i + 0.5) * in/out - 0.5, clamped
    to the valid range before interpolation, so edge pixels replicate. Same
    in/out size reproduces the input exactly. Accepts (h, w) or (h, w, c).
    """
    if out_h < 1 or out_w < 1:
        raise ArgumentError("resize target must be at least 1x1")
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize expects 2-d or HWC input, got {x.shape}")
    h, w, _ = x.shape
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    top = x[y0][:, x0] * (1.0 - fx) + x[y0][:, x1] * fx
    bot = x[y1][:, x0] * (1.0 - fx) + x[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out


def nearest_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resampling with the same half-pixel mapping; keeps
    label masks binary."""
    if out_h < 1 or out_w < 1:
        raise ArgumentError("resize target must be at least 1x1")
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    h, w, _ = x.shape
    sy = np.minimum(np.floor((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64), h - 1)
    sx = np.minimum(np.floor((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64), w - 1)
    out = x[sy][:, sx]
    return out[:, :, 0] if squeeze else out


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1]; a constant array maps to all zeros."""
    lo = float(np.min(x))
    hi = float(np.max(x))
    if hi == lo:
        return np.zeros_like(x, dtype=np.float64)
    return (x - lo) / (hi - lo)

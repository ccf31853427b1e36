"""Numpy implementations of the hot kernels.

Same contracts as the compiled module: float64 C-contiguous arrays, HWC
layout, kernels as (kh, kw, cin, cout). Shape validation lives in the
callers; these assume well-formed inputs.
"""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Patches of a padded HWC image as (out_h*out_w, kh*kw*cin)."""
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    win = win[::stride, ::stride]  # (out_h, out_w, cin, kh, kw)
    out_h, out_w = win.shape[0], win.shape[1]
    cols = win.transpose(0, 1, 3, 4, 2).reshape(out_h * out_w, kh * kw * x.shape[2])
    return np.ascontiguousarray(cols)


def conv2d_forward(x: np.ndarray, k: np.ndarray, bias: np.ndarray,
                   stride: int, pad: int) -> np.ndarray:
    kh, kw, cin, cout = k.shape
    out_h = (x.shape[0] + 2 * pad - kh) // stride + 1
    out_w = (x.shape[1] + 2 * pad - kw) // stride + 1
    cols = _im2col(x, kh, kw, stride, pad)
    out = cols @ k.reshape(kh * kw * cin, cout) + bias
    return out.reshape(out_h, out_w, cout)


def conv2d_backward_kernel(x: np.ndarray, grad_out: np.ndarray,
                           stride: int, pad: int, kh: int, kw: int) -> np.ndarray:
    cin = x.shape[2]
    cout = grad_out.shape[2]
    cols = _im2col(x, kh, kw, stride, pad)
    dk = cols.T @ grad_out.reshape(-1, cout)
    return dk.reshape(kh, kw, cin, cout)


def conv2d_backward_input(grad_out: np.ndarray, k: np.ndarray,
                          stride: int, pad: int, in_h: int, in_w: int) -> np.ndarray:
    kh, kw, cin, cout = k.shape
    out_h, out_w = grad_out.shape[0], grad_out.shape[1]
    hp, wp = in_h + 2 * pad, in_w + 2 * pad
    dcols = grad_out.reshape(-1, cout) @ k.reshape(kh * kw * cin, cout).T
    dcols = dcols.reshape(out_h, out_w, kh, kw, cin)
    # flat scatter indices into the padded gradient buffer
    iy = (np.arange(out_h) * stride)[:, None] + np.arange(kh)[None, :]  # (out_h, kh)
    ix = (np.arange(out_w) * stride)[:, None] + np.arange(kw)[None, :]  # (out_w, kw)
    flat = (iy[:, None, :, None] * wp + ix[None, :, None, :])  # (out_h, out_w, kh, kw)
    flat = flat[..., None] * cin + np.arange(cin)
    dxp = np.zeros(hp * wp * cin)
    np.add.at(dxp, flat.ravel(), dcols.ravel())
    dxp = dxp.reshape(hp, wp, cin)
    return np.ascontiguousarray(dxp[pad:pad + in_h, pad:pad + in_w, :])


def _dt1d(f: np.ndarray) -> np.ndarray:
    """1-d squared distance transform of a sampled function (lower envelope
    of parabolas); f entries may be +inf for absent sources."""
    n = f.shape[0]
    d = np.full(n, np.inf)
    src = np.flatnonzero(np.isfinite(f))
    if src.size == 0:
        return d
    v = np.empty(n, dtype=np.int64)      # parabola apex positions
    z = np.empty(n + 1)                  # envelope breakpoints
    k = 0
    v[0] = src[0]
    z[0] = -np.inf
    z[1] = np.inf
    for q in src[1:]:
        q = int(q)
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2 * q - 2 * p)
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        d[q] = (q - p) * (q - p) + f[p]
    return d


def edt_sq(fg: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest foreground pixel.

    fg is a (h, w) uint8 mask; all-inf output when it is empty. Column scans
    produce per-pixel vertical distances, then each row gets the 1-d
    transform over (vertical distance)^2.
    """
    h, w = fg.shape
    hit = fg != 0
    vert = np.full((h, w), np.inf)
    run = np.full(w, np.inf)
    for i in range(h):
        run = np.where(hit[i], 0.0, run + 1.0)
        vert[i] = run
    run = np.full(w, np.inf)
    for i in range(h - 1, -1, -1):
        run = np.where(hit[i], 0.0, run + 1.0)
        vert[i] = np.minimum(vert[i], run)
    f = np.square(vert)
    out = np.empty((h, w))
    for i in range(h):
        out[i] = _dt1d(f[i])
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: convolution forward/backward and the exact squared
Euclidean distance transform. Mirrors _fallback exactly; keep the two in
sync (tests assert bit-identical outputs on random inputs)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] k,
                   double[::1] bias, int stride, int pad):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1], cout = k.shape[3]
    cdef Py_ssize_t out_h = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t out_w = (w + 2 * pad - kw) // stride + 1
    out_arr = np.empty((out_h, out_w, cout))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t oy, ox, dy, dx, ci, co, iy0, ix0, y, xx
    cdef double v
    for oy in range(out_h):
        iy0 = oy * stride - pad
        for ox in range(out_w):
            ix0 = ox * stride - pad
            for co in range(cout):
                out[oy, ox, co] = bias[co]
            for dy in range(kh):
                y = iy0 + dy
                if y < 0 or y >= h:
                    continue
                for dx in range(kw):
                    xx = ix0 + dx
                    if xx < 0 or xx >= w:
                        continue
                    for ci in range(cin):
                        v = x[y, xx, ci]
                        if v == 0.0:
                            continue
                        for co in range(cout):
                            out[oy, ox, co] += v * k[dy, dx, ci, co]
    return out_arr


def conv2d_backward_kernel(double[:, :, ::1] x, double[:, :, ::1] grad_out,
                           int stride, int pad, int kh, int kw):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t out_h = grad_out.shape[0], out_w = grad_out.shape[1]
    cdef Py_ssize_t cout = grad_out.shape[2]
    dk_arr = np.zeros((kh, kw, cin, cout))
    cdef double[:, :, :, ::1] dk = dk_arr
    cdef Py_ssize_t oy, ox, dy, dx, ci, co, iy0, ix0, y, xx
    cdef double v
    for oy in range(out_h):
        iy0 = oy * stride - pad
        for ox in range(out_w):
            ix0 = ox * stride - pad
            for dy in range(kh):
                y = iy0 + dy
                if y < 0 or y >= h:
                    continue
                for dx in range(kw):
                    xx = ix0 + dx
                    if xx < 0 or xx >= w:
                        continue
                    for ci in range(cin):
                        v = x[y, xx, ci]
                        if v == 0.0:
                            continue
                        for co in range(cout):
                            dk[dy, dx, ci, co] += v * grad_out[oy, ox, co]
    return dk_arr


def conv2d_backward_input(double[:, :, ::1] grad_out, double[:, :, :, ::1] k,
                          int stride, int pad, int in_h, int in_w):
    cdef Py_ssize_t out_h = grad_out.shape[0], out_w = grad_out.shape[1]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1]
    cdef Py_ssize_t cin = k.shape[2], cout = k.shape[3]
    dx_arr = np.zeros((in_h, in_w, cin))
    cdef double[:, :, ::1] dxv = dx_arr
    cdef Py_ssize_t oy, ox, dy, dxi, ci, co, iy0, ix0, y, xx
    cdef double g, acc
    for oy in range(out_h):
        iy0 = oy * stride - pad
        for ox in range(out_w):
            ix0 = ox * stride - pad
            for dy in range(kh):
                y = iy0 + dy
                if y < 0 or y >= in_h:
                    continue
                for dxi in range(kw):
                    xx = ix0 + dxi
                    if xx < 0 or xx >= in_w:
                        continue
                    for ci in range(cin):
                        acc = 0.0
                        for co in range(cout):
                            acc += k[dy, dxi, ci, co] * grad_out[oy, ox, co]
                        dxv[y, xx, ci] += acc
    return dx_arr


def edt_sq(const unsigned char[:, ::1] fg):
    """Exact squared distance to nearest foreground; all-inf when empty.
    Felzenszwalb/Huttenlocher: vertical scans then per-row parabola envelope."""
    cdef Py_ssize_t h = fg.shape[0], w = fg.shape[1]
    out_arr = np.empty((h, w))
    cdef double[:, ::1] out = out_arr
    vert_arr = np.empty((h, w))
    cdef double[:, ::1] vert = vert_arr
    cdef Py_ssize_t i, j, q, p, kk
    cdef double run, s, fq
    for j in range(w):
        run = INFINITY
        for i in range(h):
            if fg[i, j]:
                run = 0.0
            else:
                run = run + 1.0
            vert[i, j] = run
        run = INFINITY
        for i in range(h - 1, -1, -1):
            if fg[i, j]:
                run = 0.0
            else:
                run = run + 1.0
            if run < vert[i, j]:
                vert[i, j] = run
    v_arr = np.empty(w, dtype=np.int64)
    z_arr = np.empty(w + 1)
    f_arr = np.empty(w)
    cdef long long[::1] v = v_arr
    cdef double[::1] z = z_arr
    cdef double[::1] f = f_arr
    for i in range(h):
        kk = -1
        for j in range(w):
            f[j] = vert[i, j] * vert[i, j]
            out[i, j] = INFINITY
        for q in range(w):
            fq = f[q]
            if fq == INFINITY:
                continue
            if kk < 0:
                kk = 0
                v[0] = q
                z[0] = -INFINITY
                z[1] = INFINITY
                continue
            while True:
                p = v[kk]
                s = ((fq + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
                if s <= z[kk]:
                    kk -= 1
                else:
                    break
            kk += 1
            v[kk] = q
            z[kk] = s
            z[kk + 1] = INFINITY
        if kk < 0:
            continue
        kk = 0
        for q in range(w):
            while z[kk + 1] < q:
                kk += 1
            p = v[kk]
            out[i, q] = (q - p) * (q - p) + f[p]
    return out_arr

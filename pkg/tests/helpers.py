"""Independent oracles for the test suite.

Everything here recomputes expected values from first principles (literal
definitions, brute force, finite differences) without touching the package's
fast paths, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np

from fundus_xai.backbone import forward, logits_from_activation
from fundus_xai.tensor_ops import log_sum_exp


def ref_conv2d(x, k, bias, stride, pad):
    """Literal zero-padded cross-correlation, triple loops."""
    h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (w + 2 * pad - kw) // stride + 1
    xp = np.zeros((h + 2 * pad, w + 2 * pad, cin))
    xp[pad:pad + h, pad:pad + w] = x
    out = np.zeros((out_h, out_w, cout))
    for oy in range(out_h):
        for ox in range(out_w):
            patch = xp[oy * stride:oy * stride + kh, ox * stride:ox * stride + kw]
            for co in range(cout):
                out[oy, ox, co] = np.sum(patch * k[:, :, :, co]) + bias[co]
    return out


def ref_max_pool2(x):
    """Loop implementation of 2x2/stride-2 ceil pooling with flat argmax,
    ties to the lowest flat row-major (h, w, c) index."""
    h, w, c = x.shape
    out_h, out_w = (h + 1) // 2, (w + 1) // 2
    pooled = np.zeros((out_h, out_w, c))
    argmax = np.zeros((out_h, out_w, c), dtype=np.int64)
    for oy in range(out_h):
        for ox in range(out_w):
            for ch in range(c):
                best, best_flat = -math.inf, -1
                for dy in range(2):
                    for dx in range(2):
                        y, xx = 2 * oy + dy, 2 * ox + dx
                        if y >= h or xx >= w:
                            continue
                        v = x[y, xx, ch]
                        if v > best:
                            best, best_flat = v, (y * w + xx) * c + ch
                pooled[oy, ox, ch] = best
                argmax[oy, ox, ch] = best_flat
    return pooled, argmax


def brute_edt(mask):
    """Distance to the nearest foreground pixel by scanning every pixel
    against every foreground point (chunked to keep memory sane)."""
    h, w = mask.shape
    pts = np.argwhere(mask)
    out = np.full((h, w), np.inf)
    if len(pts) == 0:
        return out
    cols = np.arange(w)
    for i in range(h):
        dy2 = (i - pts[:, 0]) ** 2
        dx2 = (cols[:, None] - pts[None, :, 1]) ** 2
        out[i] = np.sqrt((dy2[None, :] + dx2).min(axis=1))
    return out


def brute_directed_mhd(src_mask, dst_mask):
    """Mean over src foreground of the exact min distance to dst foreground."""
    sp = np.argwhere(src_mask).astype(np.int64)
    dp = np.argwhere(dst_mask).astype(np.int64)
    mins = []
    for lo in range(0, len(sp), 256):
        chunk = sp[lo:lo + 256]
        d2 = ((chunk[:, None, :] - dp[None, :, :]) ** 2).sum(axis=2)
        mins.append(d2.min(axis=1))
    return float(np.mean(np.sqrt(np.concatenate(mins))))


def brute_boundary(mask):
    """Boundary pixel set by checking each 4-neighborhood directly."""
    h, w = mask.shape
    out = set()
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ny, nx = y + dy, x + dx
                if not (0 <= ny < h and 0 <= nx < w) or not mask[ny, nx]:
                    out.add((y, x))
                    break
    return out


def brute_surface_dice(a, b, tolerance):
    """Surface dice from explicit boundary point sets."""
    sa, sb = brute_boundary(a), brute_boundary(b)
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0

    def dmin(p, pts):
        return min(math.dist(p, q) for q in pts)

    close_a = sum(1 for p in sa if dmin(p, sb) <= tolerance)
    close_b = sum(1 for q in sb if dmin(q, sa) <= tolerance)
    return (close_a + close_b) / (len(sa) + len(sb))


def loss_at(params, image, label):
    trace = forward(params, image)
    return log_sum_exp(trace.logits) - float(trace.logits[label])


def fd_param_grad(params, image, label, name, idx, h=1e-5):
    """Central difference of the cross-entropy loss in one parameter coord."""
    def shifted(delta):
        tensors = {k: v.copy() for k, v in params.tensors().items()}
        tensors[name][idx] += delta
        return params.with_tensors(tensors)

    return (loss_at(shifted(h), image, label)
            - loss_at(shifted(-h), image, label)) / (2 * h)


def fd_activation_grad(params, layer, activation, idx, class_index, h=1e-5):
    """Central difference of the class logit in one activation coordinate,
    rerunning the network head from the perturbed tensor."""
    a = activation.copy()
    a[idx] += h
    up = float(logits_from_activation(params, layer, a)[class_index])
    a[idx] -= 2 * h
    down = float(logits_from_activation(params, layer, a)[class_index])
    return (up - down) / (2 * h)


def pool_stable_coords(act, margin=1e-3):
    """Coordinates where the 2x2 pool decision cannot flip under a tiny
    perturbation: the unique window argmax with at least `margin` over the
    runner-up, or a non-max cell at least `margin` below the max. Gradient
    checks must avoid argmax ties (kinks), which relu zeros make common."""
    h, w, c = act.shape
    ok = []
    for oy in range((h + 1) // 2):
        for ox in range((w + 1) // 2):
            win = act[2 * oy:2 * oy + 2, 2 * ox:2 * ox + 2, :]
            wh, ww = win.shape[0], win.shape[1]
            for ch in range(c):
                vals = win[:, :, ch].ravel()
                order = np.argsort(-vals, kind="stable")
                top = vals[order[0]]
                second = vals[order[1]] if vals.size > 1 else -np.inf
                for li in range(vals.size):
                    y, x = 2 * oy + li // ww, 2 * ox + li % ww
                    if li == order[0]:
                        if top - second > margin:
                            ok.append((y, x, ch))
                    elif top - vals[li] > margin:
                        ok.append((y, x, ch))
    return ok

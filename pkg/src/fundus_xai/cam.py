"""Class activation mapping over the micro backbone.

Five methods share one pipeline: pick a relu block, combine its channels
into a raw non-negative map, bilinearly upsample to the input size, and
min-max normalize for display. They differ only in how channel weights (or
per-cell weights, for layer-cam) are obtained. Gradients are always taken
on the pre-softmax logit of the requested class.

Method references: Grad-CAM (arXiv:1610.02391), Grad-CAM++ (1710.11063),
Score-CAM (1910.01279), Layer-CAM (Jiang et al., TIP 2021). Faster
Score-CAM is the common variance-screened Score-CAM variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import LAYERS, ForwardTrace, ModelParams, forward, grad_wrt_activation
from .errors import ArgumentError
from .tensor_ops import bilinear_resize, minmax_normalize, relu, softmax

METHODS = ("grad-cam", "grad-cam++", "score-cam", "faster-score-cam", "layer-cam")


@dataclass
class Heatmap:
    """raw is the pre-upsampling map on the feature grid (already relu'd);
    rendered is the input-sized [0, 1] map used for overlays and pointing."""

    raw: np.ndarray
    rendered: np.ndarray
    method: str
    class_index: int


@dataclass
class ChannelWeights:
    """Per-channel mixing weights for the channel-weighted methods.

    For faster-score-cam, selected lists the surviving channel indices
    (ascending) and variance_ratios holds every channel's share of the total
    spatial variance, kept as diagnostics.
    """

    class_index: int
    method: str
    weights: np.ndarray
    selected: np.ndarray | None = None
    variance_ratios: np.ndarray | None = None


def _check_request(params: ModelParams, class_index: int, layer: str) -> None:
    if layer not in LAYERS:
        raise ArgumentError(f"unknown layer {layer!r}; expected one of {LAYERS}")
    if not 0 <= class_index < params.num_classes:
        raise ArgumentError(f"class index {class_index} out of range for "
                            f"{params.num_classes} classes")


def _activation(trace: ForwardTrace, layer: str) -> np.ndarray:
    return trace.conv1_relu if layer == "conv1_relu" else trace.conv2_relu


def _finalize(raw: np.ndarray, out_hw: tuple[int, int], method: str,
              class_index: int) -> Heatmap:
    rendered = minmax_normalize(bilinear_resize(raw, out_hw[0], out_hw[1]))
    return Heatmap(raw=raw, rendered=rendered, method=method,
                   class_index=class_index)


def grad_cam(params: ModelParams, image: np.ndarray, class_index: int,
             layer: str = "conv2_relu") -> tuple[Heatmap, ChannelWeights]:
    """Channel weights are the spatial means of the logit gradient; the map
    is relu of the weighted channel sum."""
    _check_request(params, class_index, layer)
    trace = forward(params, image)
    acts = _activation(trace, layer)
    grads = grad_wrt_activation(params, trace, class_index, layer)
    weights = grads.mean(axis=(0, 1))
    raw = relu(np.tensordot(acts, weights, axes=([2], [0])))
    hm = _finalize(raw, image.shape[:2], "grad-cam", class_index)
    return hm, ChannelWeights(class_index=class_index, method="grad-cam",
                              weights=weights)


def grad_cam_pp(params: ModelParams, image: np.ndarray, class_index: int,
                layer: str = "conv2_relu") -> tuple[Heatmap, ChannelWeights]:
    """Grad-CAM++ with closed-form second-order coefficients.

    Writing g for the logit gradient at the layer, the per-cell coefficient
    is a = g^2 / (2 g^2 + sum_spatial(A * g^3)) with 0/0 treated as 0, and
    the channel weight is sum_spatial(a * relu(g)). Powers of g stand in for
    the higher derivatives via the exponential-of-logit identity, which
    holds exactly for this relu network.
    """
    _check_request(params, class_index, layer)
    trace = forward(params, image)
    acts = _activation(trace, layer)
    g = grad_wrt_activation(params, trace, class_index, layer)
    g2 = g * g
    denom = 2.0 * g2 + np.sum(acts * (g2 * g), axis=(0, 1), keepdims=True)
    coeff = np.divide(g2, denom, out=np.zeros_like(g2), where=denom != 0.0)
    weights = np.sum(coeff * relu(g), axis=(0, 1))
    raw = relu(np.tensordot(acts, weights, axes=([2], [0])))
    hm = _finalize(raw, image.shape[:2], "grad-cam++", class_index)
    return hm, ChannelWeights(class_index=class_index, method="grad-cam++",
                              weights=weights)


def score_cam(params: ModelParams, image: np.ndarray, class_index: int,
              layer: str = "conv2_relu",
              channel_subset: np.ndarray | list | None = None,
              ) -> tuple[Heatmap, ChannelWeights]:
    """Gradient-free weights from channel-masked forward passes.

    Each candidate channel map is upsampled to the input size, min-max
    normalized, and multiplied into the image; its score is the class
    probability of the masked image minus that of the all-zero image.
    Weights are a softmax over the scores of the participating channels.
    Channels whose upsampled map is constant carry no spatial information
    and are skipped (weight 0 and no softmax seat).
    """
    _check_request(params, class_index, layer)
    trace = forward(params, image)
    acts = _activation(trace, layer)
    k = acts.shape[2]
    if channel_subset is None:
        candidates = np.arange(k)
    else:
        candidates = np.unique(np.asarray(channel_subset, dtype=np.int64))
        if candidates.size == 0:
            raise ArgumentError("channel subset is empty")
        if candidates[0] < 0 or candidates[-1] >= k:
            raise ArgumentError(f"channel subset out of range for {k} channels")
    h, w = image.shape[:2]
    base_prob = float(forward(params, np.zeros_like(image)).probs[class_index])
    scores = np.zeros(k)
    included = np.zeros(k, dtype=bool)
    for ch in candidates:
        up = bilinear_resize(acts[:, :, ch], h, w)
        if float(up.max()) == float(up.min()):
            continue
        mask = minmax_normalize(up)
        masked = image * mask[:, :, None]
        scores[ch] = float(forward(params, masked).probs[class_index]) - base_prob
        included[ch] = True
    weights = np.zeros(k)
    if included.any():
        weights[included] = softmax(scores[included])
    raw = relu(np.tensordot(acts, weights, axes=([2], [0])))
    hm = _finalize(raw, image.shape[:2], "score-cam", class_index)
    return hm, ChannelWeights(class_index=class_index, method="score-cam",
                              weights=weights)


def faster_score_cam(params: ModelParams, image: np.ndarray, class_index: int,
                     layer: str = "conv2_relu", n_channels: int = 10,
                     ) -> tuple[Heatmap, ChannelWeights]:
    """Score-CAM restricted to the n_channels highest-variance channels.

    Channel spatial variance (population, over the feature grid) ranks the
    candidates; ties resolve to the lower channel index and the kept subset
    stays in ascending order, so the masked passes run in a deterministic
    sequence. With n_channels >= the channel count this is exactly
    score_cam. Every channel's share of the total variance is attached as a
    diagnostic.
    """
    _check_request(params, class_index, layer)
    if n_channels < 1:
        raise ArgumentError("n_channels must be at least 1")
    trace = forward(params, image)
    acts = _activation(trace, layer)
    variances = acts.var(axis=(0, 1))
    k = variances.shape[0]
    n_keep = min(int(n_channels), k)
    # stable sort on -var: equal variances keep ascending channel order
    selected = np.sort(np.argsort(-variances, kind="stable")[:n_keep])
    hm, cw = score_cam(params, image, class_index, layer, channel_subset=selected)
    total = float(variances.sum())
    ratios = variances / total if total > 0.0 else np.zeros(k)
    hm.method = "faster-score-cam"
    return hm, ChannelWeights(class_index=class_index, method="faster-score-cam",
                              weights=cw.weights, selected=selected,
                              variance_ratios=ratios)


def layer_cam(params: ModelParams, image: np.ndarray, class_index: int,
              layer: str = "conv2_relu") -> Heatmap:
    """Per-cell weighting: raw map is relu(sum_k relu(g) * A) at each cell,
    which keeps only positively contributing activations. Useful on the
    earlier, higher-resolution block as well."""
    _check_request(params, class_index, layer)
    trace = forward(params, image)
    acts = _activation(trace, layer)
    g = grad_wrt_activation(params, trace, class_index, layer)
    raw = relu(np.sum(relu(g) * acts, axis=2))
    return _finalize(raw, image.shape[:2], "layer-cam", class_index)


def run_method(method: str, params: ModelParams, image: np.ndarray,
               class_index: int, layer: str = "conv2_relu",
               n_channels: int = 10) -> tuple[Heatmap, ChannelWeights | None]:
    """Dispatch by public method name; layer-cam has no channel weights."""
    if method == "grad-cam":
        return grad_cam(params, image, class_index, layer)
    if method == "grad-cam++":
        return grad_cam_pp(params, image, class_index, layer)
    if method == "score-cam":
        return score_cam(params, image, class_index, layer)
    if method == "faster-score-cam":
        return faster_score_cam(params, image, class_index, layer,
                                n_channels=n_channels)
    if method == "layer-cam":
        return layer_cam(params, image, class_index, layer), None
    raise ArgumentError(f"unknown method {method!r}; expected one of {METHODS}")


def attribution_record(heatmap: Heatmap, weights: ChannelWeights | None,
                       layer: str) -> dict:
    """JSON-ready record of one attribution run; weights list is empty for
    methods without channel weights."""
    return {
        "method": heatmap.method,
        "class_index": int(heatmap.class_index),
        "layer": layer,
        "weights": [] if weights is None else [float(v) for v in weights.weights],
        "raw_shape": [int(d) for d in heatmap.raw.shape],
        "rendered_shape": [int(d) for d in heatmap.rendered.shape],
    }

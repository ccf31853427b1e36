"""Micro CNN backbone with exact manual gradients.

Architecture (HWC): conv 3x3 s1 p1 -> relu -> maxpool 2x2 -> conv 3x3 s2 p1
-> relu -> maxpool 2x2 -> global average pool -> dense -> softmax, with 8 and
16 filters. For a 32x32 input the second relu block is 8x8x16, which is the
grid the attribution methods operate on. Gradients are written out layer by
layer instead of taped; the finite-difference tests hold them to ~1e-7.

Weights live in a small versioned JSON document so runs are portable and
diffable; float round-tripping relies on repr/parse being exact for doubles.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ArgumentError, ParseError, ShapeError
from .rng import SplitMix64
from .tensor_ops import (
    conv2d,
    conv2d_backward_input,
    conv2d_backward_kernel,
    dense,
    global_avg_pool,
    log_sum_exp,
    max_pool2,
    max_unpool2,
    relu,
    softmax,
)

CONV1_FILTERS = 8
CONV2_FILTERS = 16
KSIZE = 3
CONV1_STRIDE, CONV1_PAD = 1, 1
CONV2_STRIDE, CONV2_PAD = 2, 1

WEIGHTS_FORMAT = "fundus-xai-weights-v1"
TENSOR_NAMES = ("conv1.kernel", "conv1.bias", "conv2.kernel", "conv2.bias",
                "fc.weights", "fc.bias")
LAYERS = ("conv1_relu", "conv2_relu")


@dataclass
class ModelParams:
    """All trainable tensors plus the input/output contract they assume."""

    conv1_kernel: np.ndarray
    conv1_bias: np.ndarray
    conv2_kernel: np.ndarray
    conv2_bias: np.ndarray
    fc_weights: np.ndarray
    fc_bias: np.ndarray
    input_shape: tuple[int, int, int]
    num_classes: int

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "conv1.kernel": self.conv1_kernel,
            "conv1.bias": self.conv1_bias,
            "conv2.kernel": self.conv2_kernel,
            "conv2.bias": self.conv2_bias,
            "fc.weights": self.fc_weights,
            "fc.bias": self.fc_bias,
        }

    def with_tensors(self, tensors: dict[str, np.ndarray]) -> "ModelParams":
        return replace(
            self,
            conv1_kernel=tensors["conv1.kernel"],
            conv1_bias=tensors["conv1.bias"],
            conv2_kernel=tensors["conv2.kernel"],
            conv2_bias=tensors["conv2.bias"],
            fc_weights=tensors["fc.weights"],
            fc_bias=tensors["fc.bias"],
        )


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, kept for gradient reuse."""

    input: np.ndarray
    conv1_pre: np.ndarray
    conv1_relu: np.ndarray
    pool1: np.ndarray
    pool1_argmax: np.ndarray
    conv2_pre: np.ndarray
    conv2_relu: np.ndarray
    pool2: np.ndarray
    pool2_argmax: np.ndarray
    gap: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class TrainConfig:
    epochs: int = 60
    learning_rate: float = 0.001
    batch_size: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in params.tensors().items()},
                   v={k: np.zeros_like(a) for k, a in params.tensors().items()})


def _expected_shapes(input_shape, num_classes) -> dict[str, tuple]:
    cin = input_shape[2]
    return {
        "conv1.kernel": (KSIZE, KSIZE, cin, CONV1_FILTERS),
        "conv1.bias": (CONV1_FILTERS,),
        "conv2.kernel": (KSIZE, KSIZE, CONV1_FILTERS, CONV2_FILTERS),
        "conv2.bias": (CONV2_FILTERS,),
        "fc.weights": (CONV2_FILTERS, num_classes),
        "fc.bias": (num_classes,),
    }


def _check_arch(input_shape, num_classes) -> None:
    h, w, cin = input_shape
    if h < 8 or w < 8:
        raise ArgumentError(f"input {h}x{w} too small: the two pooling stages "
                            f"need at least 8x8")
    if cin < 1:
        raise ArgumentError("input needs at least one channel")
    if num_classes < 2:
        raise ArgumentError("num_classes must be at least 2")


def _he_uniform(rng: SplitMix64, shape: tuple, fan_in: int) -> np.ndarray:
    s = float(np.sqrt(6.0 / fan_in))
    return rng.fill_uniform(int(np.prod(shape)), -s, s).reshape(shape)


def _init_from_rng(rng: SplitMix64, input_shape, num_classes) -> ModelParams:
    cin = input_shape[2]
    k1 = _he_uniform(rng, (KSIZE, KSIZE, cin, CONV1_FILTERS), KSIZE * KSIZE * cin)
    k2 = _he_uniform(rng, (KSIZE, KSIZE, CONV1_FILTERS, CONV2_FILTERS),
                     KSIZE * KSIZE * CONV1_FILTERS)
    fw = _he_uniform(rng, (CONV2_FILTERS, num_classes), CONV2_FILTERS)
    return ModelParams(
        conv1_kernel=k1,
        conv1_bias=np.zeros(CONV1_FILTERS),
        conv2_kernel=k2,
        conv2_bias=np.zeros(CONV2_FILTERS),
        fc_weights=fw,
        fc_bias=np.zeros(num_classes),
        input_shape=tuple(int(d) for d in input_shape),
        num_classes=int(num_classes),
    )


def init_params(seed: int, input_shape: tuple[int, int, int] = (32, 32, 3),
                num_classes: int = 4) -> ModelParams:
    """He-uniform kernels (bound sqrt(6/fan_in)), zero biases, drawn in a
    fixed order (conv1.kernel, conv2.kernel, fc.weights) from one seeded
    SplitMix64 stream so the same seed always yields the same model."""
    _check_arch(input_shape, num_classes)
    return _init_from_rng(SplitMix64(seed), input_shape, num_classes)


def forward(params: ModelParams, image: np.ndarray) -> ForwardTrace:
    """Run the network, keeping every intermediate (pool argmaxes included)."""
    if tuple(image.shape) != tuple(params.input_shape):
        raise ShapeError(f"image shape {tuple(image.shape)} does not match "
                         f"model input {tuple(params.input_shape)}")
    x = np.asarray(image, dtype=np.float64)
    c1 = conv2d(x, params.conv1_kernel, params.conv1_bias, CONV1_STRIDE, CONV1_PAD)
    r1 = relu(c1)
    p1, a1 = max_pool2(r1)
    c2 = conv2d(p1, params.conv2_kernel, params.conv2_bias, CONV2_STRIDE, CONV2_PAD)
    r2 = relu(c2)
    p2, a2 = max_pool2(r2)
    g = global_avg_pool(p2)
    logits = dense(g, params.fc_weights, params.fc_bias)
    return ForwardTrace(input=x, conv1_pre=c1, conv1_relu=r1, pool1=p1,
                        pool1_argmax=a1, conv2_pre=c2, conv2_relu=r2, pool2=p2,
                        pool2_argmax=a2, gap=g, logits=logits,
                        probs=softmax(logits))


def logits_from_activation(params: ModelParams, layer: str,
                           activation: np.ndarray) -> np.ndarray:
    """Recompute the logits starting from a given relu block's output.

    This reruns pooling (argmaxes are re-derived from the supplied tensor),
    which makes it an independent path for derivative checks against
    grad_wrt_activation.
    """
    if layer not in LAYERS:
        raise ArgumentError(f"unknown layer {layer!r}; expected one of {LAYERS}")
    x = np.asarray(activation, dtype=np.float64)
    if layer == "conv1_relu":
        p1, _ = max_pool2(x)
        x = relu(conv2d(p1, params.conv2_kernel, params.conv2_bias,
                        CONV2_STRIDE, CONV2_PAD))
    p2, _ = max_pool2(x)
    return dense(global_avg_pool(p2), params.fc_weights, params.fc_bias)


def _grad_to_conv2_relu(params: ModelParams, trace: ForwardTrace,
                        class_index: int) -> np.ndarray:
    # d logits[c] / d gap = fc column c; GAP spreads 1/(h*w) to each cell
    h2, w2, _ = trace.pool2.shape
    g_gap = params.fc_weights[:, class_index]
    g_pool2 = np.broadcast_to(g_gap / (h2 * w2), trace.pool2.shape)
    return max_unpool2(g_pool2, trace.pool2_argmax, trace.conv2_relu.shape)


def grad_wrt_activation(params: ModelParams, trace: ForwardTrace,
                        class_index: int, layer: str) -> np.ndarray:
    """Exact gradient of the pre-softmax logit for class_index with respect
    to the chosen relu block's activation tensor."""
    if layer not in LAYERS:
        raise ArgumentError(f"unknown layer {layer!r}; expected one of {LAYERS}")
    if not 0 <= class_index < params.num_classes:
        raise ArgumentError(f"class index {class_index} out of range for "
                            f"{params.num_classes} classes")
    g_r2 = _grad_to_conv2_relu(params, trace, class_index)
    if layer == "conv2_relu":
        return g_r2
    g_c2 = g_r2 * (trace.conv2_pre > 0.0)
    g_p1 = conv2d_backward_input(g_c2, params.conv2_kernel, CONV2_STRIDE,
                                 CONV2_PAD, trace.pool1.shape[:2])
    return max_unpool2(g_p1, trace.pool1_argmax, trace.conv1_relu.shape)


def grad_wrt_params(params: ModelParams, image: np.ndarray,
                    true_label: int) -> tuple[dict[str, np.ndarray], float]:
    """Cross-entropy loss -ln p[true_label] and its exact gradients for every
    trainable tensor. Returns (grads keyed like tensors(), loss)."""
    grads, loss, _ = _backward(params, image, true_label)
    return grads, loss


def _backward(params: ModelParams, image: np.ndarray,
              true_label: int) -> tuple[dict[str, np.ndarray], float, ForwardTrace]:
    if not 0 <= true_label < params.num_classes:
        raise ArgumentError(f"label {true_label} out of range for "
                            f"{params.num_classes} classes")
    trace = forward(params, image)
    # stable: -ln softmax[c] = logsumexp(logits) - logits[c]
    loss = log_sum_exp(trace.logits) - float(trace.logits[true_label])
    d_logits = trace.probs.copy()
    d_logits[true_label] -= 1.0
    g_fc_w = np.outer(trace.gap, d_logits)
    g_fc_b = d_logits
    g_gap = params.fc_weights @ d_logits
    h2, w2, _ = trace.pool2.shape
    g_pool2 = np.broadcast_to(g_gap / (h2 * w2), trace.pool2.shape)
    g_r2 = max_unpool2(g_pool2, trace.pool2_argmax, trace.conv2_relu.shape)
    g_c2 = g_r2 * (trace.conv2_pre > 0.0)
    g_k2 = conv2d_backward_kernel(trace.pool1, g_c2, CONV2_STRIDE, CONV2_PAD,
                                  (KSIZE, KSIZE))
    g_b2 = g_c2.sum(axis=(0, 1))
    g_p1 = conv2d_backward_input(g_c2, params.conv2_kernel, CONV2_STRIDE,
                                 CONV2_PAD, trace.pool1.shape[:2])
    g_r1 = max_unpool2(g_p1, trace.pool1_argmax, trace.conv1_relu.shape)
    g_c1 = g_r1 * (trace.conv1_pre > 0.0)
    g_k1 = conv2d_backward_kernel(trace.input, g_c1, CONV1_STRIDE, CONV1_PAD,
                                  (KSIZE, KSIZE))
    g_b1 = g_c1.sum(axis=(0, 1))
    grads = {
        "conv1.kernel": g_k1, "conv1.bias": g_b1,
        "conv2.kernel": g_k2, "conv2.bias": g_b2,
        "fc.weights": g_fc_w, "fc.bias": g_fc_b,
    }
    return grads, loss, trace


def adam_step(params: ModelParams, grads: dict[str, np.ndarray],
              state: AdamState, config: TrainConfig) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; pure, returns fresh params and state.

    Update: theta -= lr * m_hat / (sqrt(v_hat) + eps), eps outside the root.
    """
    t = state.t + 1
    new_m, new_v, new_t = {}, {}, {}
    tensors = params.tensors()
    for name, g in grads.items():
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * (g * g)
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        new_t[name] = tensors[name] - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        new_m[name] = m
        new_v[name] = v
    return params.with_tensors(new_t), AdamState(m=new_m, v=new_v, t=t)


def train(dataset: list[tuple[np.ndarray, int]], config: TrainConfig,
          num_classes: int | None = None) -> tuple[ModelParams, list[dict]]:
    """Mini-batch Adam over (image, label) pairs.

    One SplitMix64 stream seeded from config.seed drives both the weight init
    and every epoch's shuffle, so a seed pins the whole trajectory. Gradients
    are averaged within each batch; the trailing partial batch still counts.
    History rows carry the running training loss and accuracy per epoch.
    """
    if not dataset:
        raise ArgumentError("training dataset is empty")
    labels = [int(lbl) for _, lbl in dataset]
    n_classes = int(num_classes) if num_classes is not None else max(labels) + 1
    input_shape = tuple(dataset[0][0].shape)
    _check_arch(input_shape, n_classes)
    for i, (img, lbl) in enumerate(dataset):
        if tuple(img.shape) != input_shape:
            raise ShapeError(f"dataset item {i} has shape {tuple(img.shape)}, "
                             f"expected {input_shape}")
        if not 0 <= lbl < n_classes:
            raise ArgumentError(f"dataset item {i} label {lbl} out of range "
                                f"for {n_classes} classes")
    rng = SplitMix64(config.seed)
    params = _init_from_rng(rng, input_shape, n_classes)
    state = AdamState.zeros_like(params)
    n = len(dataset)
    history: list[dict] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            batch = perm[start:start + config.batch_size]
            acc: dict[str, np.ndarray] | None = None
            for idx in batch:
                img, lbl = dataset[int(idx)]
                grads, loss, trace = _backward(params, img, int(lbl))
                loss_sum += loss
                correct += int(np.argmax(trace.probs)) == int(lbl)
                if acc is None:
                    acc = grads
                else:
                    for name in acc:
                        acc[name] = acc[name] + grads[name]
            mean = {name: g / len(batch) for name, g in acc.items()}
            params, state = adam_step(params, mean, state, config)
        history.append({"epoch": epoch, "loss": loss_sum / n, "accuracy": correct / n})
    return params, history


def evaluate_accuracy(params: ModelParams, dataset: list[tuple[np.ndarray, int]]) -> float:
    correct = sum(int(np.argmax(forward(params, img).probs)) == int(lbl)
                  for img, lbl in dataset)
    return correct / len(dataset)


def save_params(params: ModelParams, path: str | os.PathLike) -> None:
    """Write the versioned JSON weights document. Floats go through repr, so
    a reload reproduces every tensor bit for bit."""
    doc = {
        "format": WEIGHTS_FORMAT,
        "input_shape": list(params.input_shape),
        "num_classes": params.num_classes,
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.tensors().items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_params(path: str | os.PathLike) -> ModelParams:
    """Parse and validate a weights document; errors name what is wrong."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"weights file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        raise ParseError(f"weights file {path}: missing or unknown 'format' "
                         f"(expected {WEIGHTS_FORMAT!r})")
    for key in ("input_shape", "num_classes", "tensors"):
        if key not in doc:
            raise ParseError(f"weights file {path}: missing field {key!r}")
    input_shape = doc["input_shape"]
    if (not isinstance(input_shape, list) or len(input_shape) != 3
            or not all(isinstance(d, int) and d > 0 for d in input_shape)):
        raise ParseError(f"weights file {path}: 'input_shape' must be three "
                         f"positive integers, got {input_shape!r}")
    num_classes = doc["num_classes"]
    if not isinstance(num_classes, int):
        raise ParseError(f"weights file {path}: 'num_classes' must be an "
                         f"integer, got {num_classes!r}")
    try:
        _check_arch(tuple(input_shape), num_classes)
    except ArgumentError as exc:
        raise ParseError(f"weights file {path}: {exc}") from exc
    expected = _expected_shapes(input_shape, num_classes)
    tensors = {}
    for name, shape in expected.items():
        entry = doc["tensors"].get(name)
        if entry is None:
            raise ParseError(f"weights file {path}: missing tensor {name!r}")
        got = tuple(entry.get("shape", ()))
        if got != shape:
            raise ShapeError(f"weights file {path}: tensor {name!r} has shape "
                             f"{got}, expected {shape}")
        data = np.asarray(entry.get("data", []), dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ParseError(f"weights file {path}: tensor {name!r} has "
                             f"{data.size} values, expected {int(np.prod(shape))}")
        if not np.all(np.isfinite(data)):
            raise ParseError(f"weights file {path}: tensor {name!r} contains "
                             f"non-finite values")
        tensors[name] = data.reshape(shape)
    return ModelParams(
        conv1_kernel=tensors["conv1.kernel"],
        conv1_bias=tensors["conv1.bias"],
        conv2_kernel=tensors["conv2.kernel"],
        conv2_bias=tensors["conv2.bias"],
        fc_weights=tensors["fc.weights"],
        fc_bias=tensors["fc.bias"],
        input_shape=tuple(input_shape),
        num_classes=num_classes,
    )

"""Image I/O, geometry, and heatmap rendering.

In-memory images are float64 (h, w, c) arrays in [0, 1] with c in {1, 3}.
Pillow handles only the codec layer (PNG and the PPM/PGM family); scaling,
quantization, augmentation and the colormap are defined here so their
numerics stay pinned. Anything else (JPEG, alpha channels, palettes) is
rejected up front rather than silently converted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ArgumentError, FormatError, ShapeError
from .tensor_ops import bilinear_resize, nearest_resize

SUPPORTED_SAVE_EXT = (".png", ".ppm", ".pgm")
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Decode a PNG/PPM/PGM file to a float (h, w, c) array in [0, 1].

    8-bit samples scale by 1/255, 16-bit grayscale by 1/65535. Raises
    OSError for missing or truncated files and FormatError for encodings
    outside the contract.
    """
    try:
        with Image.open(path) as im:
            im.load()  # force full decode so truncation surfaces here
            fmt = im.format
            mode = im.mode
            if fmt not in ("PNG", "PPM"):
                raise FormatError(f"{path}: unsupported format {fmt!r} "
                                  f"(PNG/PPM/PGM only)")
            if mode == "1":
                arr = np.asarray(im, dtype=np.float64)[:, :, None]
            elif mode == "L":
                arr = np.asarray(im, dtype=np.float64)[:, :, None] / 255.0
            elif mode in ("I", "I;16"):
                arr = np.asarray(im, dtype=np.float64)[:, :, None] / 65535.0
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            else:
                raise FormatError(f"{path}: unsupported channel layout "
                                  f"{mode!r} (grayscale or RGB only)")
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image ({exc})") from exc
    return np.clip(arr, 0.0, 1.0)


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Quantize to 8 bits (round half up) and encode by file extension."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeError(f"save_image expects (h, w, 1|3), got {img.shape}")
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in SUPPORTED_SAVE_EXT:
        raise FormatError(f"{path}: unsupported output extension {ext!r} "
                          f"(use {SUPPORTED_SAVE_EXT})")
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if q.shape[2] == 1:
        Image.fromarray(q[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(q, mode="RGB").save(path)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma; single-channel input passes through unchanged."""
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeError(f"expected (h, w, 1|3), got {img.shape}")
    if img.shape[2] == 1:
        return img
    w = np.asarray(LUMA_WEIGHTS)
    return (img @ w)[:, :, None]


def resize_image(img: np.ndarray, out_h: int, out_w: int,
                 mode: str = "bilinear") -> np.ndarray:
    if mode == "bilinear":
        return bilinear_resize(img, out_h, out_w)
    if mode == "nearest":
        return nearest_resize(img, out_h, out_w)
    raise ArgumentError(f"unknown resize mode {mode!r} (bilinear or nearest)")


@dataclass(frozen=True)
class AugmentSpec:
    """Deterministic augmentation: rotation, then horizontal flip, then
    vertical flip. Rotation is clockwise in degrees (0/90/180/270)."""

    rotation: int = 0
    horizontal_flip: bool = False
    vertical_flip: bool = False

    @classmethod
    def parse(cls, text: str) -> "AugmentSpec":
        """Parse compact specs like 'rot90_hflip'; 'none' is the identity."""
        rotation, hflip, vflip = 0, False, False
        tokens = [t for t in text.strip().lower().split("_") if t]
        for tok in tokens:
            if tok == "none":
                continue
            if tok in ("rot0", "rot90", "rot180", "rot270"):
                rotation = int(tok[3:])
            elif tok == "hflip":
                hflip = True
            elif tok == "vflip":
                vflip = True
            else:
                raise ArgumentError(f"unknown augmentation token {tok!r} in "
                                    f"{text!r}")
        return cls(rotation=rotation, horizontal_flip=hflip, vertical_flip=vflip)

    def suffix(self) -> str:
        """Filename suffix, empty for the identity spec."""
        parts = []
        if self.rotation:
            parts.append(f"rot{self.rotation}")
        if self.horizontal_flip:
            parts.append("hflip")
        if self.vertical_flip:
            parts.append("vflip")
        return "".join("_" + p for p in parts)


def apply_augment(img: np.ndarray, spec: AugmentSpec) -> np.ndarray:
    """Clockwise rotation (out[i, j] = in[h-1-j, i]), then flips."""
    out = img
    for _ in range(spec.rotation // 90):
        out = np.rot90(out, k=-1, axes=(0, 1))
    if spec.horizontal_flip:
        out = out[:, ::-1]
    if spec.vertical_flip:
        out = out[::-1, :]
    return np.ascontiguousarray(out)


def _build_heat_lut() -> np.ndarray:
    """256-entry deep-blue -> blue -> cyan -> green -> yellow -> red ramp,
    linearly interpolated between evenly spaced anchors."""
    anchors = np.array([0, 51, 102, 153, 204, 255], dtype=np.float64)
    colors = np.array([
        [0.0, 0.0, 0.5],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ])
    idx = np.arange(256, dtype=np.float64)
    return np.stack([np.interp(idx, anchors, colors[:, ch]) for ch in range(3)],
                    axis=1)


HEAT_LUT = _build_heat_lut()


def colormap(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] intensities through the heat LUT to (h, w, 3) colors;
    lookup index is round(v * 255)."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    idx = np.rint(v * 255.0).astype(np.int64)
    return HEAT_LUT[idx]


def overlay_heatmap(base: np.ndarray, heat: np.ndarray,
                    alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend the colormapped heat values over a base image.

    out = (1 - alpha) * base + alpha * color; a grayscale base is replicated
    to RGB first. alpha 0 returns the (replicated) base unchanged.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError(f"alpha {alpha} outside [0, 1]")
    if base.ndim != 3 or base.shape[2] not in (1, 3):
        raise ShapeError(f"base must be (h, w, 1|3), got {base.shape}")
    if heat.shape != base.shape[:2]:
        raise ShapeError(f"heatmap shape {heat.shape} does not match base "
                         f"{base.shape[:2]}")
    rgb = np.repeat(base, 3, axis=2) if base.shape[2] == 1 else base
    out = (1.0 - alpha) * rgb + alpha * colormap(heat)
    return np.clip(out, 0.0, 1.0)

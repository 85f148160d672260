"""Pixel-space preprocessing: [0,1] rescaling, bilinear resize, rotation/flip augmentation.

All operations are pure; augmentation randomness comes from an explicit
numpy Generator so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DegenerateRangeError

TARGET_SIDE = 224


def minmax(x, xmin: float, xmax: float):
    """Map x linearly from [xmin, xmax] onto [0, 1]."""
    if not xmax > xmin:
        raise DegenerateRangeError(f"degenerate range: xmin={xmin}, xmax={xmax}")
    return (x - xmin) / (xmax - xmin)


def normalize(image: np.ndarray) -> np.ndarray:
    """Scale 8-bit pixel data to float32 in [0, 1] (fixed lower bound 0, upper 255)."""
    arr = np.asarray(image)
    if arr.size == 0:
        raise ValueError("empty image")
    return arr.astype(np.float32) / np.float32(255.0)


def resize(image: np.ndarray, height: int = TARGET_SIDE, width: int = TARGET_SIDE) -> np.ndarray:
    """Bilinear resize with half-pixel-aligned sampling and edge clamping.

    Output pixel centers map to source coordinates (i + 0.5) * scale - 0.5,
    clamped to the source grid, so resizing to the same size is the identity
    and constant images stay constant at any scale.
    """
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"expected 2-D or 3-D image, got shape {img.shape}")
    sh, sw = img.shape[:2]
    if sh < 1 or sw < 1:
        raise ValueError("source image has a zero dimension")
    if height < 1 or width < 1:
        raise ValueError("target size must be at least 1 x 1")

    r = np.clip((np.arange(height, dtype=np.float64) + 0.5) * (sh / height) - 0.5, 0.0, sh - 1.0)
    c = np.clip((np.arange(width, dtype=np.float64) + 0.5) * (sw / width) - 0.5, 0.0, sw - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, sh - 1)
    c1 = np.minimum(c0 + 1, sw - 1)
    fr = (r - r0)[:, None, None]
    fc = (c - c0)[None, :, None]

    data = img.astype(np.float64, copy=False)
    top = data[r0][:, c0] * (1.0 - fc) + data[r0][:, c1] * fc
    bot = data[r1][:, c0] * (1.0 - fc) + data[r1][:, c1] * fc
    out = top * (1.0 - fr) + bot * fr
    if squeeze:
        out = out[:, :, 0]
    if np.issubdtype(img.dtype, np.floating):
        return out.astype(img.dtype)
    return out.astype(np.float32)


def rotate(image: np.ndarray, angle_deg: float, interp: str = "bilinear") -> np.ndarray:
    """Rotate about the image center; outside pixels read 0 (black fill).

    Positive angles turn the content counterclockwise in (x=col, y=-row) terms.
    Sampling is bilinear by default; interp="nearest" gives the exact-gather
    variant used by involution-style checks.
    """
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0

    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # Inverse map: source coords of each destination pixel.
    dx = cc - cx
    dy = rr - cy
    xs = cos_t * dx - sin_t * dy + cx
    ys = sin_t * dx + cos_t * dy + cy

    data = img.astype(np.float64, copy=False)
    out = np.zeros((h, w, img.shape[2]), dtype=np.float64)
    if interp == "nearest":
        xn = np.rint(xs).astype(np.intp)
        yn = np.rint(ys).astype(np.intp)
        valid = (yn >= 0) & (yn < h) & (xn >= 0) & (xn < w)
        vals = data[np.clip(yn, 0, h - 1), np.clip(xn, 0, w - 1)]
        out = np.where(valid[:, :, None], vals, 0.0)
    elif interp == "bilinear":
        x0 = np.floor(xs).astype(np.intp)
        y0 = np.floor(ys).astype(np.intp)
        fx = (xs - x0)[:, :, None]
        fy = (ys - y0)[:, :, None]
        for dyy, dxx, wgt in (
            (0, 0, (1 - fy) * (1 - fx)),
            (0, 1, (1 - fy) * fx),
            (1, 0, fy * (1 - fx)),
            (1, 1, fy * fx),
        ):
            yy = y0 + dyy
            xx = x0 + dxx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = data[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            out += np.where(valid[:, :, None], vals * wgt, 0.0)
    else:
        raise ValueError(f"unknown interpolation {interp!r}")

    if squeeze:
        out = out[:, :, 0]
    if np.issubdtype(img.dtype, np.floating):
        return out.astype(img.dtype)
    return out.astype(np.float32)


def hflip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(image)[:, ::-1])


@dataclass(frozen=True)
class AugmentPolicy:
    """Random rotation in a symmetric degree range plus random horizontal flip."""

    rotation_range_deg: tuple[float, float] = (-45.0, 45.0)
    hflip_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.rotation_range_deg
        if lo != -hi:
            raise ValueError(f"rotation range must be symmetric about 0, got ({lo}, {hi})")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")

    def rng_for(self, index: int) -> np.random.Generator:
        """Per-image substream so parallel workers agree with the serial order."""
        return np.random.default_rng([self.seed, index])


def augment(image: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    """Apply one random rotation then (maybe) a horizontal flip.

    Draw order is fixed (angle, then flip coin) so a given rng state always
    yields the same output.
    """
    lo, hi = policy.rotation_range_deg
    angle = float(rng.uniform(lo, hi))
    out = rotate(image, angle)
    if float(rng.uniform()) < policy.hflip_prob:
        out = hflip(out)
    return out


def load_rgb(path) -> np.ndarray:
    """Decode an image file to an 8-bit H x W x 3 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def standardize(image_u8: np.ndarray) -> np.ndarray:
    """Full preprocessing for extraction: [0,1] rescale then 224 x 224 resize."""
    return resize(normalize(image_u8), TARGET_SIDE, TARGET_SIDE)


def save_png(image01: np.ndarray, path) -> None:
    """Write a [0,1] float image as 8-bit PNG (used by the augment preview)."""
    arr = np.clip(np.asarray(image01), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path, format="PNG")

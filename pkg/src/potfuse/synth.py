"""Procedural stand-in dataset: plain road textures vs. textures with dark potholes.

Each image is asphalt-like value noise with horizontal wear streaks and a
per-image brightness offset; pothole images additionally get 1-3 dark filled
ellipses with soft edges, kept away from the border. Bit-deterministic per
(seed, label, index) so two runs produce identical PNG files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import preprocess
from .dataset import LABEL_NORMAL, LABEL_POTHOLE

DEFAULT_SIZE = (240, 320)  # (height, width); non-square so resize is exercised


def _value_noise(rng: np.random.Generator, height: int, width: int, cells: int, amp: float) -> np.ndarray:
    coarse = rng.uniform(-amp, amp, size=(cells, cells))
    return preprocess.resize(coarse, height, width)


def _asphalt(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    base = rng.uniform(0.42, 0.52)
    img = np.full((height, width), base)
    img += _value_noise(rng, height, width, 6, 0.022)
    img += _value_noise(rng, height, width, 24, 0.015)
    img += rng.normal(0.0, 0.008, size=(height, width))
    # A few darker horizontal wear streaks.
    for _ in range(rng.integers(2, 5)):
        row = int(rng.integers(0, height))
        half = int(rng.integers(1, 4))
        depth = rng.uniform(0.02, 0.04)
        img[max(0, row - half) : row + half + 1] -= depth
    return img


def _add_potholes(rng: np.random.Generator, img: np.ndarray) -> None:
    # Blob mass (count x area x depth) is kept well above the texture-noise
    # tail so the classes stay separable through cell-mean features.
    height, width = img.shape
    margin_y, margin_x = int(height * 0.18), int(width * 0.18)
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(int(rng.integers(3, 5))):
        cy = rng.uniform(margin_y, height - margin_y)
        cx = rng.uniform(margin_x, width - margin_x)
        a = rng.uniform(30.0, 58.0)  # semi-axes in pixels
        b = rng.uniform(24.0, 44.0)
        phi = rng.uniform(0.0, np.pi)
        depth = rng.uniform(0.45, 0.58)
        dx, dy = xx - cx, yy - cy
        u = dx * np.cos(phi) + dy * np.sin(phi)
        v = -dx * np.sin(phi) + dy * np.cos(phi)
        r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        soft = np.clip((1.1 - r) / 0.25, 0.0, 1.0)  # soft rim, full depth inside
        img -= depth * soft


def synth_image(rng: np.random.Generator, pothole: bool, size: tuple[int, int] = DEFAULT_SIZE) -> np.ndarray:
    """One 8-bit RGB road texture."""
    height, width = size
    gray = _asphalt(rng, height, width)
    if pothole:
        _add_potholes(rng, gray)
    gray = np.clip(gray, 0.0, 1.0)
    # Slight fixed channel tint so the images are genuinely RGB.
    rgb = np.stack([gray * 0.98, gray, gray * 1.02], axis=2)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def generate_dataset(
    out_dir,
    n_pothole: int = 450,
    n_normal: int = 450,
    seed: int = 7,
    size: tuple[int, int] = DEFAULT_SIZE,
) -> dict[str, Path]:
    """Write <out>/pothole/*.png and <out>/normal/*.png; returns the two directories."""
    out = Path(out_dir)
    dirs = {"pothole": out / "pothole", "normal": out / "normal"}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    from PIL import Image  # noqa: PLC0415

    for label, name, count in (
        (LABEL_POTHOLE, "pothole", n_pothole),
        (LABEL_NORMAL, "normal", n_normal),
    ):
        for i in range(count):
            rng = np.random.default_rng([seed, label, i])
            img = synth_image(rng, pothole=(label == LABEL_POTHOLE), size=size)
            Image.fromarray(img).save(dirs[name] / f"{name}_{i:04d}.png", format="PNG")
    return dirs

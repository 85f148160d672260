"""Labeled road-image manifests: ingestion, stratified 9:1 splitting, verification.

Labels: 0 = pothole road, 1 = normal road. The manifest file is JSON-Lines
with a single header line, see save_manifest/load_manifest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError

LABEL_POTHOLE = 0
LABEL_NORMAL = 1
LABEL_NAMES = {LABEL_POTHOLE: "pothole", LABEL_NORMAL: "normal"}
SPLITS = ("train", "test", "unassigned")
SCHEMA_VERSION = 1


@dataclass
class ImageSample:
    path: str
    label: int
    split: str = "unassigned"
    width: int | None = None
    height: int | None = None


@dataclass
class Manifest:
    samples: list[ImageSample] = field(default_factory=list)
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def select(self, split: str | None) -> list[ImageSample]:
        if split is None or split == "all":
            return list(self.samples)
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [s for s in self.samples if s.split == split]

    def counts(self) -> dict[str, int]:
        out = {name: 0 for name in SPLITS}
        for s in self.samples:
            out[s.split] = out.get(s.split, 0) + 1
        return out


@dataclass
class IngestResult:
    samples: list[ImageSample]
    skipped: list[str]


def _probe_image(path: Path) -> tuple[int, int] | None:
    """Return (width, height) if the file decodes as an image, else None."""
    try:
        with Image.open(path) as im:
            im.convert("RGB")
            return im.size
    except (UnidentifiedImageError, OSError, ValueError):
        return None


def ingest(directory, label: int) -> IngestResult:
    """Scan a directory for decodable images, one ImageSample per file.

    Files are taken in sorted path order so ingestion is deterministic;
    non-image files land in the skipped list.
    """
    if label not in (LABEL_POTHOLE, LABEL_NORMAL):
        raise ValueError(f"label must be 0 or 1, got {label}")
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"not a readable directory: {root}")

    samples: list[ImageSample] = []
    skipped: list[str] = []
    for p in sorted(root.iterdir(), key=lambda q: q.as_posix()):
        if not p.is_file():
            continue
        size = _probe_image(p)
        if size is None:
            skipped.append(p.as_posix())
            continue
        samples.append(
            ImageSample(path=p.as_posix(), label=label, width=size[0], height=size[1])
        )
    return IngestResult(samples=samples, skipped=skipped)


def _check_unique_paths(samples: list[ImageSample]) -> None:
    seen: set[str] = set()
    for s in samples:
        if s.path in seen:
            raise ValueError(f"duplicate path in manifest: {s.path}")
        seen.add(s.path)


def split(manifest: Manifest, train_frac: float, seed: int) -> Manifest:
    """Stratified per-class split: floor(n_c * train_frac) of each class to train.

    Each class's sample positions are shuffled with the seeded generator
    (class 0 first, then class 1); sample order in the manifest is preserved,
    only the split field changes.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie strictly between 0 and 1, got {train_frac}")
    if any(s.split != "unassigned" for s in manifest.samples):
        raise ValueError("manifest is already split; re-ingest to split again")
    _check_unique_paths(manifest.samples)

    rng = np.random.default_rng(seed)
    assignment = ["test"] * len(manifest.samples)
    for label in (LABEL_POTHOLE, LABEL_NORMAL):
        positions = [i for i, s in enumerate(manifest.samples) if s.label == label]
        order = rng.permutation(len(positions))
        n_train = math.floor(len(positions) * train_frac)
        for rank, j in enumerate(order):
            assignment[positions[j]] = "train" if rank < n_train else "test"

    samples = [replace(s, split=assignment[i]) for i, s in enumerate(manifest.samples)]
    return Manifest(samples=samples, seed=seed, schema_version=manifest.schema_version)


@dataclass
class VerificationReport:
    missing: list[str] = field(default_factory=list)
    undecodable: list[str] = field(default_factory=list)
    invalid_labels: list[str] = field(default_factory=list)
    duplicates: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)
    class_counts: dict[str, dict[int, int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not (self.missing or self.undecodable or self.invalid_labels or self.duplicates)

    def issue_count(self) -> int:
        return len(self.missing) + len(self.undecodable) + len(self.invalid_labels) + len(self.duplicates)


def verify(manifest: Manifest) -> VerificationReport:
    """Check files and labels; every problem becomes a report entry, never a raise."""
    report = VerificationReport(counts=manifest.counts())
    seen: set[str] = set()
    for s in manifest.samples:
        if s.path in seen:
            report.duplicates.append(s.path)
        seen.add(s.path)
        if s.label not in (LABEL_POTHOLE, LABEL_NORMAL):
            report.invalid_labels.append(s.path)
        p = Path(s.path)
        if not p.is_file():
            report.missing.append(s.path)
        elif _probe_image(p) is None:
            report.undecodable.append(s.path)
        per_class = report.class_counts.setdefault(s.split, {})
        per_class[s.label] = per_class.get(s.label, 0) + 1
    return report


def save_manifest(manifest: Manifest, path) -> None:
    """JSON-Lines, UTF-8, LF: one header line then one line per sample."""
    _check_unique_paths(manifest.samples)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"schema_version": manifest.schema_version, "seed": manifest.seed})]
    for s in manifest.samples:
        lines.append(json.dumps({"path": s.path, "label": s.label, "split": s.split}))
    out.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def load_manifest(path) -> Manifest:
    raw = Path(path).read_bytes().decode("utf-8")
    lines = [ln for ln in raw.split("\n") if ln.strip()]
    if not lines:
        raise FormatError(f"empty manifest file: {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise FormatError(f"bad manifest header in {path}: {e}") from e
    if "schema_version" not in header or "seed" not in header:
        raise FormatError(f"manifest header missing schema_version/seed: {path}")
    samples = []
    for ln in lines[1:]:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise FormatError(f"bad manifest line in {path}: {e}") from e
        samples.append(ImageSample(path=rec["path"], label=rec["label"], split=rec["split"]))
    return Manifest(samples=samples, seed=header["seed"], schema_version=header["schema_version"])

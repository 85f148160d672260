"""Frozen-backbone feature extraction, fusion, and the PFV1 feature store.

Three backbones in a fixed canonical order produce 2048 + 1280 + 2016 = 5344
fused dimensions. Real graphs are ONNX files (input "input", 1x3x224x224
float32 in [0,1], output 1 x output_dim); a deterministic stub extractor with
the same dimensions ships in-tree so the pipeline runs without any weights.
"""

from __future__ import annotations

import math
import shlex
import struct
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import preprocess
from .dataset import Manifest
from .errors import ExtractionError, FormatError, FusionError
from .preprocess import AugmentPolicy
from .validation import check_image_01

BACKBONE_ORDER = ("resnet50", "efficientnet", "regnet")
BACKBONE_DIMS = {"resnet50": 2048, "efficientnet": 1280, "regnet": 2016}
# On-disk id codes for the PFV1 slice table (nonzero so blank bytes never parse).
BACKBONE_CODES = {"resnet50": 1, "efficientnet": 2, "regnet": 3}
CODE_TO_BACKBONE = {v: k for k, v in BACKBONE_CODES.items()}
FUSED_DIM = sum(BACKBONE_DIMS.values())
INPUT_SIDE = preprocess.TARGET_SIDE

PFV1_MAGIC = b"PFV1"


@dataclass(frozen=True)
class BackboneSpec:
    id: str
    output_dim: int
    graph_path: str | None = None

    def __post_init__(self):
        expected = BACKBONE_DIMS.get(self.id)
        if expected is None:
            raise ValueError(f"unknown backbone id {self.id!r}")
        if self.output_dim != expected:
            raise ValueError(
                f"{self.id} must have output_dim {expected}, got {self.output_dim}"
            )

    @classmethod
    def of(cls, backbone_id: str, graph_path: str | None = None) -> "BackboneSpec":
        return cls(id=backbone_id, output_dim=BACKBONE_DIMS[backbone_id], graph_path=graph_path)


def default_slice_map() -> list[tuple[str, int, int]]:
    out = []
    start = 0
    for bid in BACKBONE_ORDER:
        out.append((bid, start, BACKBONE_DIMS[bid]))
        start += BACKBONE_DIMS[bid]
    return out


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (n, d) float32, row per sample
    labels: np.ndarray | None = None  # (n,) uint8
    # Empty slice map = store not derived from backbones (toy/synthetic features).
    slice_map: list[tuple[str, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
            if self.labels.shape != (self.values.shape[0],):
                raise ValueError("labels length must match the number of rows")
        if self.slice_map:
            total = sum(length for _, _, length in self.slice_map)
            if total != self.values.shape[1]:
                raise ValueError(
                    f"slice map covers {total} columns but matrix has {self.values.shape[1]}"
                )

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def slice(self, backbone_id: str) -> np.ndarray:
        for bid, start, length in self.slice_map:
            if bid == backbone_id:
                return self.values[:, start : start + length]
        raise KeyError(f"no slice for backbone {backbone_id!r}")


class StubBackbone:
    """Deterministic stand-in extractor: cell-averaged grayscale grid.

    The 224 x 224 plane is cut into g x g near-equal cells, g = ceil(sqrt(dim));
    each cell contributes its mean grayscale, flattened row-major and truncated
    to the backbone width. Information-bearing, dimension-faithful, no weights.
    """

    def __init__(self, spec: BackboneSpec):
        self.spec = spec
        g = math.ceil(math.sqrt(spec.output_dim))
        self.grid = g
        self.bounds = np.floor(np.arange(g + 1) * INPUT_SIDE / g).astype(np.intp)

    def extract(self, image: np.ndarray) -> np.ndarray:
        gray = np.asarray(image, dtype=np.float64).mean(axis=2)
        b = self.bounds
        sums = np.add.reduceat(np.add.reduceat(gray, b[:-1], axis=0), b[:-1], axis=1)
        areas = np.outer(np.diff(b), np.diff(b))
        cells = sums / areas
        return cells.ravel()[: self.spec.output_dim].astype(np.float32)


class OnnxRuntimeBackbone:
    """Runs an ONNX graph in-process via onnxruntime (optional dependency)."""

    def __init__(self, spec: BackboneSpec, session=None):
        if spec.graph_path is None and session is None:
            raise ValueError(f"backbone {spec.id} has no graph_path")
        self.spec = spec
        if session is None:
            try:
                import onnxruntime  # noqa: PLC0415
            except ImportError as e:
                raise ExtractionError(
                    "onnxruntime is not installed; install the [onnx] extra "
                    "or use an external runner command"
                ) from e
            session = onnxruntime.InferenceSession(
                str(spec.graph_path), providers=["CPUExecutionProvider"]
            )
        self.session = session

    def extract(self, image: np.ndarray) -> np.ndarray:
        nchw = np.transpose(image.astype(np.float32), (2, 0, 1))[None]
        outputs = self.session.run(None, {"input": nchw})
        out = np.asarray(outputs[0])
        if out.shape != (1, self.spec.output_dim):
            raise ExtractionError(
                f"{self.spec.id}: graph produced shape {out.shape}, "
                f"expected (1, {self.spec.output_dim})"
            )
        return out[0].astype(np.float32)


class SubprocessBackbone:
    """Runs an ONNX graph through an external runner process.

    Protocol: the runner is started as `argv... graph_path`, prints one JSON
    handshake line {"output_dim": N} on stdout, then loops reading
    3*224*224 little-endian float32 CHW bytes from stdin and writing N float32
    bytes per input. Lets the pipeline use runtimes outside this process
    (e.g. onnxruntime-node) when the Python onnxruntime wheel is unavailable.
    """

    def __init__(self, spec: BackboneSpec, runner_argv: list[str]):
        if spec.graph_path is None:
            raise ValueError(f"backbone {spec.id} has no graph_path")
        self.spec = spec
        self._in_bytes = 3 * INPUT_SIDE * INPUT_SIDE * 4
        self.proc = subprocess.Popen(
            [*runner_argv, str(spec.graph_path)],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        header = self.proc.stdout.readline()
        try:
            import json  # noqa: PLC0415

            dim = int(json.loads(header)["output_dim"])
        except Exception as e:
            self.close()
            raise ExtractionError(f"bad runner handshake for {spec.id}: {header!r}") from e
        if dim != spec.output_dim:
            self.close()
            raise ExtractionError(
                f"{spec.id}: runner serves {dim}-d outputs, expected {spec.output_dim}"
            )

    def extract(self, image: np.ndarray) -> np.ndarray:
        nchw = np.ascontiguousarray(np.transpose(image.astype(np.float32), (2, 0, 1)))
        self.proc.stdin.write(nchw.tobytes())
        self.proc.stdin.flush()
        payload = self.proc.stdout.read(self.spec.output_dim * 4)
        if len(payload) != self.spec.output_dim * 4:
            raise ExtractionError(f"{self.spec.id}: runner stream ended early")
        return np.frombuffer(payload, dtype="<f4").copy()

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def extract_one(extractor, image: np.ndarray) -> np.ndarray:
    """Run one backbone over one preprocessed image and validate the output."""
    check_image_01(image, side=INPUT_SIDE)
    vec = np.asarray(extractor.extract(image))
    dim = extractor.spec.output_dim
    if vec.shape != (dim,):
        raise ExtractionError(
            f"{extractor.spec.id}: got output shape {vec.shape}, expected ({dim},)"
        )
    if not np.all(np.isfinite(vec)):
        raise ExtractionError(f"{extractor.spec.id}: output contains NaN/Inf")
    return vec.astype(np.float32)


def fuse(by_backbone: dict[str, np.ndarray]) -> tuple[np.ndarray, list[tuple[str, int, int]]]:
    """Concatenate per-backbone vectors in canonical order; 5344 fused dims."""
    parts = []
    slice_map = []
    start = 0
    for bid in BACKBONE_ORDER:
        if bid not in by_backbone:
            raise FusionError(f"missing vector for backbone {bid}")
        vec = np.asarray(by_backbone[bid], dtype=np.float32).ravel()
        expected = BACKBONE_DIMS[bid]
        if vec.shape[0] != expected:
            raise FusionError(
                f"backbone {bid} produced length {vec.shape[0]}, expected {expected}"
            )
        parts.append(vec)
        slice_map.append((bid, start, expected))
        start += expected
    return np.concatenate(parts), slice_map


def split_fused(fused: np.ndarray, slice_map: list[tuple[str, int, int]]) -> dict[str, np.ndarray]:
    """Inverse of fuse: recover the per-backbone vectors exactly."""
    vec = np.asarray(fused)
    return {bid: vec[..., start : start + length] for bid, start, length in slice_map}


def stub_extractors() -> dict[str, StubBackbone]:
    return {bid: StubBackbone(BackboneSpec.of(bid)) for bid in BACKBONE_ORDER}


def onnx_extractors(graph_dir, runner_cmd: str | None = None) -> dict:
    """Real extractors from <graph_dir>/<backbone>.onnx files.

    Prefers in-process onnxruntime; falls back to the runner command
    (a shell-split argv prefix) when given.
    """
    graph_dir = Path(graph_dir)
    out = {}
    for bid in BACKBONE_ORDER:
        path = graph_dir / f"{bid}.onnx"
        if not path.is_file():
            raise FileNotFoundError(f"missing graph file: {path}")
        spec = BackboneSpec.of(bid, graph_path=str(path))
        if runner_cmd:
            out[bid] = SubprocessBackbone(spec, shlex.split(runner_cmd))
        else:
            out[bid] = OnnxRuntimeBackbone(spec)
    return out


def extract_dataset(
    manifest: Manifest,
    extractors: dict,
    split: str | None = None,
    augment_policy: AugmentPolicy | None = None,
) -> FeatureMatrix:
    """One fused row per selected sample, in manifest order, labels attached.

    Any per-image failure aborts with the sample path in the error. With an
    augment policy, each image is augmented once using its per-index substream
    before extraction (off by default; the paper-style pipeline extracts the
    stored images as-is).
    """
    missing = [bid for bid in BACKBONE_ORDER if bid not in extractors]
    if missing:
        raise ValueError(f"extractors missing for backbones: {missing}")

    selected = [(i, s) for i, s in enumerate(manifest.samples)]
    if split is not None and split != "all":
        selected = [(i, s) for i, s in selected if s.split == split]

    rows = np.zeros((len(selected), FUSED_DIM), dtype=np.float32)
    labels = np.zeros(len(selected), dtype=np.uint8)
    slice_map = default_slice_map()
    for row, (index, sample) in enumerate(selected):
        try:
            image = preprocess.standardize(preprocess.load_rgb(sample.path))
            if augment_policy is not None:
                image = np.clip(
                    preprocess.augment(image, augment_policy, augment_policy.rng_for(index)),
                    0.0,
                    1.0,
                )
            vectors = {bid: extract_one(extractors[bid], image) for bid in BACKBONE_ORDER}
            fused, slice_map = fuse(vectors)
        except Exception as e:
            raise ExtractionError(f"extraction failed for {sample.path}: {e}") from e
        rows[row] = fused
        labels[row] = sample.label
    return FeatureMatrix(values=rows, labels=labels, slice_map=slice_map)


def save_features(fm: FeatureMatrix, path) -> None:
    """PFV1, little-endian: magic, n, d, label flag, slice table, labels, float32 rows."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    label_flag = 0 if fm.labels is None else 1
    blob = bytearray()
    blob += PFV1_MAGIC
    blob += struct.pack("<IIII", fm.rows, fm.cols, label_flag, len(fm.slice_map))
    for bid, start, length in fm.slice_map:
        blob += struct.pack("<BII", BACKBONE_CODES[bid], start, length)
    if label_flag:
        blob += fm.labels.tobytes()
    blob += np.ascontiguousarray(fm.values, dtype="<f4").tobytes()
    out.write_bytes(bytes(blob))


def load_features(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise FormatError(f"feature store too short: {path}")
    if raw[:4] != PFV1_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r} in {path}, expected {PFV1_MAGIC!r}")
    n, d, label_flag, slice_count = struct.unpack_from("<IIII", raw, 4)
    if label_flag not in (0, 1):
        raise FormatError(f"bad label flag {label_flag} in {path}")
    offset = 20
    slice_map = []
    for _ in range(slice_count):
        if offset + 9 > len(raw):
            raise FormatError(f"truncated slice table in {path}")
        code, start, length = struct.unpack_from("<BII", raw, offset)
        offset += 9
        if code not in CODE_TO_BACKBONE:
            raise FormatError(f"unknown backbone code {code} in {path}")
        slice_map.append((CODE_TO_BACKBONE[code], start, length))
    labels = None
    if label_flag:
        if offset + n > len(raw):
            raise FormatError(f"truncated label block in {path}")
        labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=offset).copy()
        offset += n
    expected = offset + n * d * 4
    if len(raw) != expected:
        raise FormatError(
            f"length mismatch in {path}: file has {len(raw)} bytes, header implies {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4", count=n * d, offset=offset).reshape(n, d).copy()
    return FeatureMatrix(values=values, labels=labels, slice_map=slice_map)

"""Convert torchvision backbones into the ONNX feature graphs the pipeline consumes.

Each graph takes input "input" of shape 1x3x224x224 (float32, values in [0,1])
and emits the pooled pre-classifier features. ImageNet mean/std normalization
is baked into the graph so callers never normalize beyond [0,1] scaling.
Variants are pinned by measured pooled width: 2048 / 1280 / 2016.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

REQUIRED_DIMS = {"resnet50": 2048, "efficientnet": 1280, "regnet": 2016}
INPUT_SHAPE = (1, 3, 224, 224)
PARITY_THRESHOLD = 1e-4

# Pooled widths of these variants match the contract exactly; the pretrained
# checkpoints are the torchvision ones whose top-1 scores the selection is
# based on (80.858 / 84.228 / 82.828).
DEFAULT_VARIANTS = {
    "resnet50": "resnet50",
    "efficientnet": "efficientnet_v2_s",
    "regnet": "regnet_y_8gf",
}
PRETRAINED_WEIGHTS = {
    "resnet50": "ResNet50_Weights.IMAGENET1K_V2",
    "efficientnet": "EfficientNet_V2_S_Weights.IMAGENET1K_V1",
    "regnet": "RegNet_Y_8GF_Weights.IMAGENET1K_V2",
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class WidthMismatchError(RuntimeError):
    """The chosen variant's pooled feature width does not match the contract."""


@dataclass
class ExportRecord:
    backbone_id: str
    source: str
    weight_sha256: str
    output_dim: int
    graph_file: str
    parity_input: str
    parity_expected: str
    parity_seed: int
    validation: str = "pending"

    def to_dict(self) -> dict:
        return asdict(self)


class PooledFeatureGraph(nn.Module):
    """Backbone minus classifier, with [0,1] -> ImageNet normalization inside."""

    def __init__(self, backbone: nn.Module):
        super().__init__()
        self.backbone = backbone
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

    def forward(self, x):
        return self.backbone((x - self.mean) / self.std)


def _strip_classifier(model: nn.Module) -> nn.Module:
    if hasattr(model, "fc"):
        model.fc = nn.Identity()
    elif hasattr(model, "classifier"):
        model.classifier = nn.Identity()
    else:
        raise ValueError("model exposes neither .fc nor .classifier to strip")
    return model


def _resolve_weights(backbone_id: str, weights: str):
    import torchvision.models as tvm  # noqa: PLC0415

    if weights == "random":
        return None
    if weights == "pretrained":
        enum_name, _, member = PRETRAINED_WEIGHTS[backbone_id].partition(".")
        return getattr(getattr(tvm, enum_name), member)
    raise ValueError(f"weights must be 'random' or 'pretrained', got {weights!r}")


def _build_model(backbone_id: str, weights: str, variant: str | None):
    import torchvision.models as tvm  # noqa: PLC0415

    variant = variant or DEFAULT_VARIANTS[backbone_id]
    ctor = getattr(tvm, variant)
    torch.manual_seed(0)  # random weights are reproducible per variant
    model = ctor(weights=_resolve_weights(backbone_id, weights)).eval()
    source = f"torchvision/{variant}/" + (
        PRETRAINED_WEIGHTS[backbone_id] if weights == "pretrained" else "random-seed0"
    )
    return _strip_classifier(model), source


def _state_checksum(model: nn.Module) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _export_onnx(module: nn.Module, example: torch.Tensor, path: Path) -> None:
    """torch.onnx.export via the TorchScript exporter.

    When the `onnx` package is unavailable the exporter's post-processing step
    (which only rewrites custom onnxscript functions, none of which we use)
    is skipped; the serialized proto bytes are already complete.
    """
    try:
        import onnx  # noqa: F401, PLC0415

        patched = None
    except ImportError:
        from torch.onnx._internal.torchscript_exporter import onnx_proto_utils  # noqa: PLC0415

        patched = onnx_proto_utils._add_onnxscript_fn
        onnx_proto_utils._add_onnxscript_fn = lambda model_bytes, custom_opsets: model_bytes
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            torch.onnx.export(
                module,
                (example,),
                str(path),
                input_names=["input"],
                output_names=["features"],
                opset_version=17,
                dynamo=False,
            )
    finally:
        if patched is not None:
            from torch.onnx._internal.torchscript_exporter import onnx_proto_utils  # noqa: PLC0415

            onnx_proto_utils._add_onnxscript_fn = patched


def export(
    backbone_id: str,
    out_dir,
    weights: str = "random",
    variant: str | None = None,
    parity_seed: int = 42,
) -> ExportRecord:
    """Export one backbone; refuses variants whose pooled width is off-contract.

    Writes <id>.onnx plus a parity fixture: a seeded random input and the
    reference (eager PyTorch) output, both raw little-endian float32.
    """
    if backbone_id not in REQUIRED_DIMS:
        raise ValueError(f"unknown backbone id {backbone_id!r}")
    required = REQUIRED_DIMS[backbone_id]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model, source = _build_model(backbone_id, weights, variant)
    graph = PooledFeatureGraph(model).eval()

    with torch.no_grad():
        probe = graph(torch.zeros(*INPUT_SHAPE))
    measured = int(probe.numel())
    if probe.shape[0] != 1 or measured != required:
        raise WidthMismatchError(
            f"{backbone_id}: variant produces {measured}-wide pooled features, "
            f"contract requires {required}"
        )

    rng = np.random.default_rng(parity_seed)
    example = torch.from_numpy(rng.random(INPUT_SHAPE, dtype=np.float32))
    with torch.no_grad():
        expected = graph(example).numpy().astype("<f4")

    graph_file = out_dir / f"{backbone_id}.onnx"
    _export_onnx(graph, example, graph_file)

    input_file = out_dir / f"{backbone_id}.input.f32"
    expected_file = out_dir / f"{backbone_id}.expected.f32"
    input_file.write_bytes(example.numpy().astype("<f4").tobytes())
    expected_file.write_bytes(expected.tobytes())

    return ExportRecord(
        backbone_id=backbone_id,
        source=source,
        weight_sha256=_state_checksum(model),
        output_dim=required,
        graph_file=graph_file.name,
        parity_input=input_file.name,
        parity_expected=expected_file.name,
        parity_seed=parity_seed,
    )


MANIFEST_NAME = "export_manifest.json"


def export_all(out_dir, weights: str = "random", parity_seed: int = 42) -> list[ExportRecord]:
    records = [export(bid, out_dir, weights, parity_seed=parity_seed) for bid in REQUIRED_DIMS]
    write_manifest(records, out_dir)
    return records


def write_manifest(records: list[ExportRecord], out_dir) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(
        json.dumps({"backbones": [r.to_dict() for r in records]}, indent=2) + "\n",
        encoding="utf-8",
    )
    return path


def read_manifest(out_dir) -> list[ExportRecord]:
    data = json.loads((Path(out_dir) / MANIFEST_NAME).read_text(encoding="utf-8"))
    return [ExportRecord(**row) for row in data["backbones"]]


def _validate_with_onnxruntime(graph_file: Path, inp: np.ndarray) -> np.ndarray:
    import onnxruntime  # noqa: PLC0415

    session = onnxruntime.InferenceSession(str(graph_file), providers=["CPUExecutionProvider"])
    return np.asarray(session.run(None, {"input": inp})[0])


def _validate_with_runner(
    runner_argv: list[str], graph_file: Path, input_file: Path, expected_file: Path
) -> dict:
    proc = subprocess.run(
        [*runner_argv, str(graph_file), str(input_file), str(expected_file)],
        capture_output=True,
        text=True,
        check=False,
    )
    if proc.returncode not in (0, 1) or not proc.stdout.strip():
        raise RuntimeError(f"runner failed: {proc.stderr.strip() or proc.returncode}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def validate(
    out_dir,
    record: ExportRecord,
    runner_argv: list[str] | None = None,
    threshold: float = PARITY_THRESHOLD,
) -> dict:
    """Run the recorded parity input through the graph in a second runtime.

    The reference side is the eager PyTorch output captured at export time;
    the graph side is onnxruntime (in-process when the wheel is installed,
    otherwise via the node runner). Pass threshold: max abs diff < 1e-4.
    """
    out_dir = Path(out_dir)
    graph_file = out_dir / record.graph_file
    input_file = out_dir / record.parity_input
    expected_file = out_dir / record.parity_expected
    expected = np.frombuffer(expected_file.read_bytes(), dtype="<f4")

    try:
        import onnxruntime  # noqa: F401, PLC0415

        have_ort = True
    except ImportError:
        have_ort = False

    if have_ort:
        inp = np.frombuffer(input_file.read_bytes(), dtype="<f4").reshape(INPUT_SHAPE)
        got = _validate_with_onnxruntime(graph_file, inp)
        shape_ok = got.shape == (1, record.output_dim)
        max_diff = float(np.max(np.abs(got.ravel() - expected))) if shape_ok else float("inf")
        report = {
            "backbone_id": record.backbone_id,
            "runtime": "onnxruntime",
            "output_shape": list(got.shape),
            "max_abs_diff": max_diff,
            "threshold": threshold,
            "pass": bool(shape_ok and max_diff < threshold),
        }
    elif runner_argv:
        payload = _validate_with_runner(runner_argv, graph_file, input_file, expected_file)
        payload.setdefault("backbone_id", record.backbone_id)
        payload["threshold"] = threshold
        payload["pass"] = bool(
            payload.get("max_abs_diff", float("inf")) < threshold
            and payload.get("output_dim") == record.output_dim
        )
        report = payload
    else:
        raise RuntimeError(
            "no validation runtime available: install onnxruntime or pass a runner command"
        )
    return report

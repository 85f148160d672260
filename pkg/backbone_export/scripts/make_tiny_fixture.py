"""Regenerate the tiny ONNX fixture used by the runtime tests.

The input tensor is a deterministic integer sequence (no PRNG) so the
TypeScript tests can rebuild it bit-for-bit: x[i] = ((i * 2654435761) % 4096) / 4096.
Run from the backbone_export directory: python scripts/make_tiny_fixture.py
"""

from pathlib import Path

import numpy as np
import torch
from torch import nn

from backbone_export.export import _export_onnx

OUT = Path(__file__).resolve().parent.parent / "runtime" / "test" / "fixtures"


def deterministic_input() -> np.ndarray:
    i = np.arange(3 * 224 * 224, dtype=np.int64)
    vals = ((i * 2654435761) % 4096) / 4096.0
    return vals.astype(np.float32).reshape(1, 3, 224, 224)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    model = nn.Sequential(
        nn.Conv2d(3, 8, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
    ).eval()
    x = torch.from_numpy(deterministic_input())
    with torch.no_grad():
        expected = model(x).numpy().astype("<f4")
    _export_onnx(model, x, OUT / "tiny.onnx")
    (OUT / "tiny.expected.f32").write_bytes(expected.tobytes())
    print(f"wrote {OUT / 'tiny.onnx'} and tiny.expected.f32 ({expected.shape[1]} dims)")


if __name__ == "__main__":
    main()

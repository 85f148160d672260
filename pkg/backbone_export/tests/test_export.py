"""Exporter tests + the secondary acceptance criteria.

The graph-execution side needs the node runtime: `npm install --ignore-scripts`
and `npm run build` under runtime/ (the session fixture does this when needed).
Pretrained weights are not downloadable in offline environments, so everything
runs with reproducible random weights; shape, parity, and determinism checks
are weight-independent.
"""

import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from backbone_export.cli import main
from backbone_export.export import (
    REQUIRED_DIMS,
    WidthMismatchError,
    export,
    read_manifest,
    validate,
    write_manifest,
)

RUNTIME = Path(__file__).resolve().parent.parent / "runtime"


def node_ready() -> bool:
    return (
        shutil.which("node") is not None
        and (RUNTIME / "node_modules" / "onnxruntime-node").is_dir()
    )


@pytest.fixture(scope="session")
def runtime_dist() -> Path:
    if not node_ready():
        pytest.skip("node runtime not installed (npm install --ignore-scripts under runtime/)")
    if not (RUNTIME / "dist" / "validate.js").is_file():
        subprocess.run(["npm", "run", "build"], cwd=RUNTIME, check=True, capture_output=True)
    return RUNTIME / "dist"


@pytest.fixture(scope="session")
def exported(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("graphs")
    assert main(["export", "--out", str(out), "--weights", "random"]) == 0
    return out


class TestExport:
    def test_all_three_dims_and_manifest(self, exported):
        records = read_manifest(exported)
        dims = {r.backbone_id: r.output_dim for r in records}
        assert dims == {"resnet50": 2048, "efficientnet": 1280, "regnet": 2016}
        assert sum(dims.values()) == 5344
        for r in records:
            assert (exported / r.graph_file).stat().st_size > 1_000_000
            assert len(r.weight_sha256) == 64
            assert (exported / r.parity_input).stat().st_size == 3 * 224 * 224 * 4
            assert (exported / r.parity_expected).stat().st_size == r.output_dim * 4

    def test_wrong_variant_refused_with_measured_width(self, tmp_path):
        with pytest.raises(WidthMismatchError, match="512") as exc:
            export("resnet50", tmp_path, weights="random", variant="resnet18")
        assert "2048" in str(exc.value)

    def test_reference_outputs_are_deterministic(self, tmp_path):
        a = export("efficientnet", tmp_path / "a", weights="random")
        b = export("efficientnet", tmp_path / "b", weights="random")
        ea = (tmp_path / "a" / a.parity_expected).read_bytes()
        eb = (tmp_path / "b" / b.parity_expected).read_bytes()
        assert ea == eb
        assert a.weight_sha256 == b.weight_sha256

    def test_validate_needs_some_runtime(self, exported):
        try:
            import onnxruntime  # noqa: F401

            pytest.skip("onnxruntime installed; the no-runtime path cannot trigger")
        except ImportError:
            pass
        record = read_manifest(exported)[0]
        with pytest.raises(RuntimeError, match="runtime"):
            validate(exported, record, runner_argv=None)


class TestDualRuntimeParity:
    def test_all_graphs_within_threshold(self, exported, runtime_dist):
        runner = ["node", str(runtime_dist / "validate.js")]
        for record in read_manifest(exported):
            report = validate(exported, record, runner_argv=runner)
            assert report["pass"], report
            assert report["max_abs_diff"] < 1e-4
            assert report["output_dim"] == REQUIRED_DIMS[record.backbone_id]
        print("\nPASS dual-runtime parity: torch reference vs onnxruntime-node, "
              "max abs diff < 1e-4 for all three graphs")

    def test_validate_cli_updates_manifest(self, exported, runtime_dist, tmp_path):
        # work on a copy so other tests see the pristine manifest
        work = tmp_path / "copy"
        shutil.copytree(exported, work)
        rc = main(["validate", "--out", str(work),
                   "--runner-cmd", f"node {runtime_dist / 'validate.js'}"])
        assert rc == 0
        assert all(r.validation == "passed" for r in read_manifest(work))

    def test_corrupted_graph_fails_validation(self, exported, runtime_dist, tmp_path):
        work = tmp_path / "corrupt"
        work.mkdir()
        records = [r for r in read_manifest(exported) if r.backbone_id == "resnet50"]
        src = exported / records[0].graph_file
        (work / records[0].graph_file).write_bytes(src.read_bytes()[: 10_000])
        for name in (records[0].parity_input, records[0].parity_expected):
            shutil.copy(exported / name, work / name)
        write_manifest(records, work)
        rc = main(["validate", "--out", str(work),
                   "--runner-cmd", f"node {runtime_dist / 'validate.js'}"])
        assert rc == 1


class TestPrimaryPipelineOnRealGraphs:
    def test_extract_ten_road_photos(self, exported, runtime_dist, tmp_path):
        potfuse_cli = pytest.importorskip("potfuse.cli", reason="primary package not installed")
        from potfuse.features import load_features

        assert potfuse_cli.main(["synth", "--out", str(tmp_path / "photos"), "--seed", "21",
                                 "--count-pothole", "5", "--count-normal", "5"]) == 0
        assert potfuse_cli.main(["dataset", "ingest",
                                 "--pothole-dir", str(tmp_path / "photos" / "pothole"),
                                 "--normal-dir", str(tmp_path / "photos" / "normal"),
                                 "--out", str(tmp_path / "manifest.jsonl")]) == 0
        assert potfuse_cli.main(["extract", "--manifest", str(tmp_path / "manifest.jsonl"),
                                 "--split", "all", "--mode", "real",
                                 "--graph-dir", str(exported),
                                 "--runner-cmd", f"node {runtime_dist / 'serve.js'}",
                                 "--out", str(tmp_path / "real.pfv")]) == 0
        fm = load_features(tmp_path / "real.pfv")
        assert fm.values.shape == (10, 5344)
        assert np.all(np.isfinite(fm.values))
        assert fm.slice_map == [("resnet50", 0, 2048), ("efficientnet", 2048, 1280),
                                ("regnet", 3328, 2016)]
        print("\nPASS primary extract over real graphs: 10 road photos -> 10 x 5344 store "
              "via the out-of-process onnxruntime-node backend")


class TestCli:
    def test_export_single_backbone(self, tmp_path, capsys):
        assert main(["export", "--out", str(tmp_path), "--backbone", "efficientnet"]) == 0
        out = capsys.readouterr().out
        assert "efficientnet" in out and "1280" in out
        manifest = json.loads((tmp_path / "export_manifest.json").read_text())
        assert len(manifest["backbones"]) == 1

    def test_help(self, capsys):
        for argv in (["--help"], ["export", "--help"], ["validate", "--help"]):
            with pytest.raises(SystemExit) as exc:
                main(argv)
            assert exc.value.code == 0
            capsys.readouterr()

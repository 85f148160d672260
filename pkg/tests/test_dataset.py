import numpy as np
import pytest
from PIL import Image

from potfuse.dataset import (
    Manifest,
    ingest,
    load_manifest,
    save_manifest,
    split,
    verify,
)
from potfuse.errors import FormatError


def write_image(path, size=(12, 10), value=100):
    arr = np.full((size[1], size[0], 3), value, dtype=np.uint8)
    Image.fromarray(arr).save(path)


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    for i in range(3):
        write_image(d / f"img_{i}.png", value=50 + i)
    (d / "notes.txt").write_text("not an image")
    return d


class TestIngest:
    def test_counts_and_skips(self, image_dir):
        result = ingest(image_dir, label=0)
        assert len(result.samples) == 3
        assert len(result.skipped) == 1
        assert result.skipped[0].endswith("notes.txt")

    def test_sorted_deterministic_order(self, image_dir):
        result = ingest(image_dir, label=1)
        paths = [s.path for s in result.samples]
        assert paths == sorted(paths)
        again = ingest(image_dir, label=1)
        assert [s.path for s in again.samples] == paths

    def test_fields(self, image_dir):
        result = ingest(image_dir, label=0)
        s = result.samples[0]
        assert s.label == 0 and s.split == "unassigned"
        assert (s.width, s.height) == (12, 10)

    def test_empty_dir(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        assert ingest(d, label=1).samples == []

    def test_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest(tmp_path / "nope", label=0)

    def test_bad_label(self, image_dir):
        with pytest.raises(ValueError):
            ingest(image_dir, label=2)


def toy_manifest(n0, n1):
    samples = []
    result = []
    for label, count in ((0, n0), (1, n1)):
        for i in range(count):
            result.append((f"/data/c{label}/im_{i:03d}.png", label))
    from potfuse.dataset import ImageSample

    samples = [ImageSample(path=p, label=lab) for p, lab in result]
    return Manifest(samples=samples)


class TestSplit:
    def test_stratified_counts(self):
        out = split(toy_manifest(20, 20), 0.9, seed=0)
        counts = out.counts()
        assert counts["train"] == 36 and counts["test"] == 4
        for label in (0, 1):
            n_train = sum(1 for s in out.samples if s.label == label and s.split == "train")
            assert n_train == 18

    def test_single_class_floor(self):
        out = split(toy_manifest(10, 0), 0.9, seed=1)
        counts = out.counts()
        assert counts["train"] == 9 and counts["test"] == 1

    def test_same_seed_identical(self):
        a = split(toy_manifest(30, 30), 0.8, seed=42)
        b = split(toy_manifest(30, 30), 0.8, seed=42)
        assert [s.split for s in a.samples] == [s.split for s in b.samples]

    def test_different_seed_differs(self):
        a = split(toy_manifest(30, 30), 0.8, seed=1)
        b = split(toy_manifest(30, 30), 0.8, seed=2)
        assert [s.split for s in a.samples] != [s.split for s in b.samples]

    def test_partition_property(self):
        for seed in range(5):
            out = split(toy_manifest(17, 23), 0.75, seed=seed)
            assert all(s.split in ("train", "test") for s in out.samples)
            for label, n in ((0, 17), (1, 23)):
                n_train = sum(1 for s in out.samples if s.label == label and s.split == "train")
                assert n_train == int(np.floor(n * 0.75))

    def test_already_split_rejected(self):
        once = split(toy_manifest(4, 4), 0.5, seed=0)
        with pytest.raises(ValueError):
            split(once, 0.5, seed=0)

    def test_train_frac_bounds(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                split(toy_manifest(4, 4), bad, seed=0)

    def test_duplicate_paths_rejected(self):
        m = toy_manifest(2, 0)
        m.samples[1].path = m.samples[0].path
        with pytest.raises(ValueError):
            split(m, 0.5, seed=0)


class TestVerify:
    def test_intact_manifest(self, image_dir):
        result = ingest(image_dir, label=0)
        m = Manifest(samples=result.samples)
        report = verify(m)
        assert report.ok
        assert report.counts["unassigned"] == 3

    def test_missing_file(self, image_dir):
        result = ingest(image_dir, label=0)
        m = Manifest(samples=result.samples)
        (image_dir / "img_1.png").unlink()
        report = verify(m)
        assert len(report.missing) == 1
        assert report.missing[0].endswith("img_1.png")

    def test_undecodable_file(self, image_dir):
        result = ingest(image_dir, label=0)
        m = Manifest(samples=result.samples)
        (image_dir / "img_2.png").write_bytes(b"garbage")
        report = verify(m)
        assert len(report.undecodable) == 1

    def test_invalid_label(self, image_dir):
        result = ingest(image_dir, label=0)
        m = Manifest(samples=result.samples)
        m.samples[0].label = 2
        report = verify(m)
        assert len(report.invalid_labels) == 1
        assert not report.ok


class TestManifestFile:
    def test_round_trip(self, tmp_path):
        m = split(toy_manifest(6, 6), 0.5, seed=9)
        m.seed = 9
        path = tmp_path / "m.jsonl"
        save_manifest(m, path)
        loaded = load_manifest(path)
        assert loaded.seed == 9 and loaded.schema_version == m.schema_version
        assert [(s.path, s.label, s.split) for s in loaded.samples] == [
            (s.path, s.label, s.split) for s in m.samples
        ]

    def test_format_header_then_lines(self, tmp_path):
        m = toy_manifest(2, 1)
        path = tmp_path / "m.jsonl"
        save_manifest(m, path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode("utf-8").splitlines()
        assert len(lines) == 4
        import json

        header = json.loads(lines[0])
        assert header == {"schema_version": 1, "seed": 0}
        rec = json.loads(lines[1])
        assert set(rec) == {"path", "label", "split"}

    def test_save_is_deterministic(self, tmp_path):
        m = split(toy_manifest(5, 5), 0.8, seed=3)
        save_manifest(m, tmp_path / "a.jsonl")
        save_manifest(m, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"nope": 1}\n')
        with pytest.raises(FormatError):
            load_manifest(p)
        p.write_text("")
        with pytest.raises(FormatError):
            load_manifest(p)

import json
import time

import numpy as np
import pytest

from potfuse.errors import DimensionError, UndefinedMetricError
from potfuse.metrics import (
    ConfusionCounts,
    accuracy,
    append_csv_row,
    build_report,
    confusion,
    emit_report,
    f1,
    fps_bench,
    load_report,
    precision,
    recall,
    report_to_dict,
    roc_auc,
)


def brute_force_pairwise_auc(scores, truths, positive_class=0):
    """O(n^2) oracle: fraction of (pos, neg) pairs ranked correctly, ties half."""
    pos = [s for s, t in zip(scores, truths) if t == positive_class]
    neg = [s for s, t in zip(scores, truths) if t != positive_class]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def trapezoid_auc(scores, truths, positive_class=0):
    """Independent oracle: trapezoidal area under the ROC curve, ties grouped."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(truths) == positive_class
    n_pos, n_neg = pos.sum(), (~pos).sum()
    order = np.argsort(-scores, kind="mergesort")
    tpr = [0.0]
    fpr = [0.0]
    tp = fp = 0
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        for k in range(i, j + 1):
            if pos[order[k]]:
                tp += 1
            else:
                fp += 1
        tpr.append(tp / n_pos)
        fpr.append(fp / n_neg)
        i = j + 1
    return float(np.trapezoid(tpr, fpr))


class TestConfusion:
    def test_perfect_all_positive(self):
        c = confusion([0] * 5, [0] * 5, positive_class=0)
        assert (c.tp, c.fp, c.fn, c.tn) == (5, 0, 0, 0)

    def test_complement_predictions(self):
        c = confusion([1, 1, 0, 0], [0, 0, 1, 1], positive_class=0)
        assert (c.tp, c.tn) == (0, 0)
        assert (c.fp, c.fn) == (2, 2)

    def test_hand_enumerated_quadrant(self):
        c = confusion([0, 0, 1, 1], [0, 1, 1, 0], positive_class=0)
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            confusion([0, 1], [0], positive_class=0)

    def test_total_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 60))
            preds = rng.integers(0, 2, n)
            truths = rng.integers(0, 2, n)
            assert confusion(preds, truths, 0).total == n


class TestRatioMetrics:
    def test_paper_accuracies(self):
        c = ConfusionCounts(tp=44, fp=1, fn=1, tn=44)
        assert c.total == 90
        assert accuracy(c) == pytest.approx(88 / 90)
        assert accuracy(c) == pytest.approx(0.9778, abs=5e-5)
        c900 = ConfusionCounts(tp=445, fp=5, fn=5, tn=445)
        assert accuracy(c900) == pytest.approx(890 / 900)
        assert accuracy(c900) == pytest.approx(0.9889, abs=5e-5)

    def test_half_everything(self):
        c = ConfusionCounts(tp=1, fp=1, fn=1, tn=0)
        assert precision(c) == 0.5 and recall(c) == 0.5 and f1(c) == 0.5

    def test_zero_denominator_flags(self):
        flags = []
        c = ConfusionCounts(tp=0, fp=0, fn=2, tn=2)
        assert precision(c, flags) == 0.0
        assert "precision_zero_denominator" in flags
        c2 = ConfusionCounts(tp=0, fp=0, fn=0, tn=4)
        flags2 = []
        assert recall(c2, flags2) == 0.0 and f1(c2, flags2) == 0.0
        assert "recall_zero_denominator" in flags2 and "f1_zero_denominator" in flags2

    def test_exact_against_direct_counts(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            preds = rng.integers(0, 2, n)
            truths = rng.integers(0, 2, n)
            c = confusion(preds, truths, positive_class=0)
            tp = sum(1 for p, t in zip(preds, truths) if p == 0 and t == 0)
            fp = sum(1 for p, t in zip(preds, truths) if p == 0 and t == 1)
            fn = sum(1 for p, t in zip(preds, truths) if p == 1 and t == 0)
            tn = sum(1 for p, t in zip(preds, truths) if p == 1 and t == 1)
            assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
            assert accuracy(c) == ((tp + tn) / n)
            if tp + fn:
                assert recall(c) == tp / (tp + fn)
            if tp + fp:
                assert precision(c) == tp / (tp + fp)
            p, r = precision(c), recall(c)
            if p + r:
                assert f1(c) == 2 * p * r / (p + r)


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1], positive_class=0) == 1.0

    def test_all_ties(self):
        assert roc_auc([0.5] * 6, [0, 1, 0, 1, 0, 1], positive_class=0) == 0.5

    def test_two_pair_example(self):
        # scores for the positive class, truths (+, -, +): both pairs ranked right
        assert roc_auc([0.9, 0.4, 0.6], [0, 1, 0], positive_class=0) == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.5, 0.6], [0, 0], positive_class=0)

    def test_matches_both_oracles(self):
        rng = np.random.default_rng(2)
        for trial in range(60):
            n = int(rng.integers(2, 201))
            truths = rng.integers(0, 2, n)
            if len(set(truths.tolist())) < 2:
                continue
            # quantized scores provoke ties
            scores = np.round(rng.random(n), 2)
            ours = roc_auc(scores, truths, positive_class=0)
            assert ours == pytest.approx(trapezoid_auc(scores, truths, 0), abs=1e-12)
            if n <= 60:
                assert ours == pytest.approx(brute_force_pairwise_auc(scores, truths, 0), abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        truths = rng.integers(0, 2, 50)
        truths[:2] = [0, 1]
        scores = rng.random(50)
        base = roc_auc(scores, truths, 0)
        assert roc_auc(np.exp(scores), truths, 0) == pytest.approx(base, abs=1e-12)
        assert roc_auc(2 * scores + 3, truths, 0) == pytest.approx(base, abs=1e-12)

    def test_complement_scores_sum_to_one_without_ties(self):
        rng = np.random.default_rng(4)
        scores = rng.permutation(40) / 40.0  # distinct
        truths = rng.integers(0, 2, 40)
        truths[:2] = [0, 1]
        a = roc_auc(scores, truths, 0)
        b = roc_auc(1.0 - scores, truths, 0)
        assert a + b == pytest.approx(1.0, abs=1e-12)


class TestFpsBench:
    def test_positive_rates(self):
        report = fps_bench(lambda item: 0, ["a", "b", "c"], warmup=1)
        assert report.fps > 0 and report.ms_per_image > 0
        assert report.n_images == 3 and report.warmup == 1

    def test_warmup_excluded_from_timing(self):
        calls = {"n": 0}

        def pipeline(item):
            calls["n"] += 1
            if calls["n"] <= 2:
                time.sleep(0.2)  # slow only during warmup

        report = fps_bench(pipeline, ["x", "y", "z"], warmup=2)
        assert calls["n"] == 5
        assert report.ms_per_image < 100.0

    def test_empty_images_rejected(self):
        with pytest.raises(ValueError):
            fps_bench(lambda item: 0, [], warmup=0)

    def test_throughput_is_rate_like(self):
        # fps should be roughly independent of the list length
        work = np.random.default_rng(0).random((160, 160))

        def pipeline(item):
            return float(np.linalg.norm(work @ work))

        short = fps_bench(pipeline, list(range(30)), warmup=5)
        long = fps_bench(pipeline, list(range(60)), warmup=5)
        assert abs(long.fps - short.fps) / short.fps < 0.2


class TestReports:
    def sample_report(self, fps=None):
        preds = [0, 0, 1, 1, 0]
        truths = [0, 1, 1, 1, 0]
        scores = [0.9, 0.6, 0.2, 0.3, 0.8]
        return build_report(preds, truths, scores, positive_class=0, fps=fps)

    def test_round_trip(self, tmp_path):
        report = self.sample_report(fps=12.5)
        p = tmp_path / "r.json"
        emit_report(report, p)
        loaded = load_report(p)
        assert loaded == report

    def test_key_order_fixed(self, tmp_path):
        p = tmp_path / "r.json"
        emit_report(self.sample_report(), p)
        keys = list(json.loads(p.read_text()).keys())
        assert keys == ["n", "positive_class", "accuracy", "precision", "recall",
                        "f1", "roc_auc", "fps", "confusion", "flags"]

    def test_missing_fps_is_null_and_empty_csv_cell(self, tmp_path):
        report = self.sample_report(fps=None)
        p = tmp_path / "r.json"
        emit_report(report, p)
        assert json.loads(p.read_text())["fps"] is None
        csv_path = tmp_path / "cmp.csv"
        append_csv_row(csv_path, "modelA", report)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "model,accuracy,precision,recall,f1,roc_auc,fps"
        assert lines[1].endswith(",")

    def test_two_model_csv(self, tmp_path):
        csv_path = tmp_path / "cmp.csv"
        append_csv_row(csv_path, "modelA", self.sample_report(fps=10.0))
        append_csv_row(csv_path, "modelB", self.sample_report(fps=20.0))
        lines = csv_path.read_text().splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("modelA,") and lines[2].startswith("modelB,")
        loaded = report_to_dict(self.sample_report(fps=10.0))
        assert float(lines[1].split(",")[1]) == loaded["accuracy"]

    def test_all_ones_iff_perfect(self):
        perfect = build_report([0, 1, 0], [0, 1, 0], [0.9, 0.1, 0.8], 0)
        assert (perfect.accuracy, perfect.precision, perfect.recall, perfect.f1) == (1, 1, 1, 1)
        imperfect = build_report([0, 1, 1], [0, 1, 0], [0.9, 0.1, 0.2], 0)
        assert imperfect.accuracy < 1.0

"""Binary-classification metrics, ROC-AUC, the FPS benchmark, and report files."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, UndefinedMetricError


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_class: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class EvalReport:
    n: int
    positive_class: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    confusion: ConfusionCounts
    fps: float | None = None
    flags: list[str] = field(default_factory=list)


def confusion(predictions, truths, positive_class: int = 0) -> ConfusionCounts:
    pred = np.asarray(predictions)
    true = np.asarray(truths)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise DimensionError(
            f"predictions and truths must be equal-length non-empty vectors, "
            f"got {pred.shape} vs {true.shape}"
        )
    pos_pred = pred == positive_class
    pos_true = true == positive_class
    return ConfusionCounts(
        tp=int(np.sum(pos_pred & pos_true)),
        fp=int(np.sum(pos_pred & ~pos_true)),
        fn=int(np.sum(~pos_pred & pos_true)),
        tn=int(np.sum(~pos_pred & ~pos_true)),
        positive_class=positive_class,
    )


def _ratio(num: int, den: int, name: str, flags: list[str] | None) -> float:
    # Zero denominators yield 0.0 with a flag, never NaN, so reports stay comparable.
    if den == 0:
        if flags is not None:
            flags.append(f"{name}_zero_denominator")
        return 0.0
    return num / den


def accuracy(counts: ConfusionCounts, flags: list[str] | None = None) -> float:
    return _ratio(counts.tp + counts.tn, counts.total, "accuracy", flags)


def recall(counts: ConfusionCounts, flags: list[str] | None = None) -> float:
    return _ratio(counts.tp, counts.tp + counts.fn, "recall", flags)


def precision(counts: ConfusionCounts, flags: list[str] | None = None) -> float:
    return _ratio(counts.tp, counts.tp + counts.fp, "precision", flags)


def f1(counts: ConfusionCounts, flags: list[str] | None = None) -> float:
    p = precision(counts, None)
    r = recall(counts, None)
    if p + r == 0.0:
        if flags is not None:
            flags.append("f1_zero_denominator")
        return 0.0
    return 2.0 * p * r / (p + r)


def roc_auc(scores, truths, positive_class: int = 0) -> float:
    """Pairwise AUC: P(score_pos > score_neg) with ties counting one half.

    Computed by midranks, which is exactly the pairwise definition.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truths)
    if s.shape != t.shape or s.ndim != 1:
        raise DimensionError(f"scores/truths shape mismatch: {s.shape} vs {t.shape}")
    pos = t == positive_class
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC needs both classes among the truths")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[pos].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def build_report(
    predictions,
    truths,
    scores,
    positive_class: int = 0,
    fps: float | None = None,
) -> EvalReport:
    flags: list[str] = []
    counts = confusion(predictions, truths, positive_class)
    return EvalReport(
        n=counts.total,
        positive_class=positive_class,
        accuracy=accuracy(counts, flags),
        precision=precision(counts, flags),
        recall=recall(counts, flags),
        f1=f1(counts, flags),
        roc_auc=roc_auc(scores, truths, positive_class),
        confusion=counts,
        fps=fps,
        flags=flags,
    )


@dataclass
class ThroughputReport:
    fps: float
    ms_per_image: float
    n_images: int
    warmup: int
    parallel: bool = False


def fps_bench(pipeline, images, warmup: int = 3) -> ThroughputReport:
    """Time end-to-end classification of every image after untimed warmup calls.

    Warmup cycles over the image list; the timed section runs single-threaded
    on a monotonic clock.
    """
    items = list(images)
    if not items:
        raise ValueError("empty image list")
    for i in range(warmup):
        pipeline(items[i % len(items)])
    start = time.perf_counter()
    for item in items:
        pipeline(item)
    elapsed = time.perf_counter() - start
    elapsed = max(elapsed, 1e-9)
    return ThroughputReport(
        fps=len(items) / elapsed,
        ms_per_image=elapsed / len(items) * 1000.0,
        n_images=len(items),
        warmup=warmup,
    )


REPORT_KEYS = (
    "n",
    "positive_class",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "roc_auc",
    "fps",
    "confusion",
    "flags",
)
CSV_HEADER = ["model", "accuracy", "precision", "recall", "f1", "roc_auc", "fps"]


def report_to_dict(report: EvalReport) -> dict:
    c = report.confusion
    values = {
        "n": report.n,
        "positive_class": report.positive_class,
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "roc_auc": report.roc_auc,
        "fps": report.fps,
        "confusion": {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn},
        "flags": list(report.flags),
    }
    return {k: values[k] for k in REPORT_KEYS}


def report_from_dict(data: dict) -> EvalReport:
    c = data["confusion"]
    return EvalReport(
        n=data["n"],
        positive_class=data["positive_class"],
        accuracy=data["accuracy"],
        precision=data["precision"],
        recall=data["recall"],
        f1=data["f1"],
        roc_auc=data["roc_auc"],
        confusion=ConfusionCounts(
            tp=c["tp"], fp=c["fp"], fn=c["fn"], tn=c["tn"], positive_class=data["positive_class"]
        ),
        fps=data.get("fps"),
        flags=list(data.get("flags", [])),
    )


def emit_report(report: EvalReport, path) -> None:
    """Canonical JSON, fixed key order; absent fps serializes as null."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")


def load_report(path) -> EvalReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def append_csv_row(csv_path, model_name: str, report: EvalReport) -> None:
    """One comparison row per model; header written when the file is new."""
    path = Path(csv_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    is_new = not path.exists()
    with path.open("a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if is_new:
            writer.writerow(CSV_HEADER)
        fps_cell = "" if report.fps is None else repr(float(report.fps))
        writer.writerow(
            [
                model_name,
                repr(float(report.accuracy)),
                repr(float(report.precision)),
                repr(float(report.recall)),
                repr(float(report.f1)),
                repr(float(report.roc_auc)),
                fps_cell,
            ]
        )

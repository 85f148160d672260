"""Feature-space visualizations: 2-D PCA, exact t-SNE, and the sample x feature heatmap.

Outputs are plot-ready files (CSV scatter data, PGM heat matrix); no plotting
library is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError
from .features import FeatureMatrix
from .validation import as_float_matrix

HEATMAP_CLAMP = (-0.2, 1.0)


@dataclass
class Embedding2D:
    points: np.ndarray  # (n, 2)
    labels: np.ndarray | None
    method: str
    metadata: dict = field(default_factory=dict)


class PCA2:
    """Top-2 principal components via eigendecomposition on the smaller side.

    For n <= d the n x n Gram matrix is decomposed instead of the d x d
    covariance, which keeps 5344-d stores cheap. Component signs are fixed so
    the first nonzero loading is positive.
    """

    def __init__(self):
        self.components_ = None  # (2, d)
        self.explained_variance_ratio_ = None
        self.mean_ = None

    def fit_transform(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        n, d = X.shape
        if n < 3 or d < 2:
            raise ValueError(f"need at least 3 samples and 2 features, got {n} x {d}")
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        total_var = float(np.sum(Xc**2)) / (n - 1)
        if total_var == 0.0:
            raise DegenerateDataError("zero-variance data has no principal components")

        if d <= n:
            cov = (Xc.T @ Xc) / (n - 1)
            evals, evecs = np.linalg.eigh(cov)
            top = np.argsort(evals)[::-1][:2]
            lam = np.maximum(evals[top], 0.0)
            comps = evecs[:, top].T
        else:
            gram = (Xc @ Xc.T) / (n - 1)
            evals, evecs = np.linalg.eigh(gram)
            top = np.argsort(evals)[::-1][:2]
            lam = np.maximum(evals[top], 0.0)
            comps = np.zeros((2, d))
            for k in range(2):
                sigma = np.sqrt(lam[k] * (n - 1))
                if sigma < 1e-300:
                    raise DegenerateDataError("data rank below 2; cannot extract two components")
                comps[k] = (Xc.T @ evecs[:, top[k]]) / sigma

        for k in range(2):
            nz = np.nonzero(np.abs(comps[k]) > 1e-12)[0]
            if nz.size and comps[k, nz[0]] < 0:
                comps[k] = -comps[k]
        self.components_ = comps
        self.explained_variance_ratio_ = lam / total_var
        return Xc @ comps.T


def pca2(fm: FeatureMatrix) -> Embedding2D:
    model = PCA2()
    points = model.fit_transform(fm.values)
    return Embedding2D(
        points=points,
        labels=None if fm.labels is None else fm.labels.copy(),
        method="pca",
        metadata={"explained_variance_ratio": [float(r) for r in model.explained_variance_ratio_]},
    )


def _conditional_affinities(
    sq_dists: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Per-point bandwidth search matching Shannon entropy (bits) to log2(perplexity)."""
    n = sq_dists.shape[0]
    target = np.log2(perplexity)
    P = np.zeros((n, n))
    entropies = np.zeros(n)
    for i in range(n):
        d = np.delete(sq_dists[i], i)
        d = d - d.min()  # shift-invariant: rescales all weights equally
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        for _ in range(max_iter):
            w = np.exp(-d * beta)
            total = w.sum()
            if total <= 0.0:
                p = np.full_like(d, 1.0 / len(d))
            else:
                p = w / total
            nzp = p[p > 0]
            entropy = float(-np.sum(nzp * np.log2(nzp)))
            diff = entropy - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
        row = np.zeros(n)
        row[np.arange(n) != i] = p
        P[i] = row
        entropies[i] = entropy
    return P, entropies


def _kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


class TSNE2:
    """Exact O(n^2) t-SNE to 2-D.

    Defaults: perplexity 30, 1000 iterations, early exaggeration x12 for the
    first 250 iterations, step size 200, momentum 0.5 switching to 0.8 when
    exaggeration ends. Runs shorter than 500 iterations scale the exaggeration
    window to half the run so the true KL objective always gets optimized.
    Deterministic for a fixed seed.
    """

    def __init__(
        self,
        perplexity: float = 30.0,
        iterations: int = 1000,
        seed: int = 0,
        step_size: float = 200.0,
        early_exaggeration: float = 12.0,
        exaggeration_iters: int = 250,
        momentum_early: float = 0.5,
        momentum_late: float = 0.8,
    ):
        self.perplexity = perplexity
        self.iterations = iterations
        self.seed = seed
        self.step_size = step_size
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iters = exaggeration_iters
        self.momentum_early = momentum_early
        self.momentum_late = momentum_late
        self.kl_initial_ = None
        self.kl_final_ = None
        self.entropies_ = None

    def fit_transform(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        n = X.shape[0]
        if n < 3 * self.perplexity:
            raise ValueError(
                f"perplexity {self.perplexity} too large for {n} samples (need n >= 3*perplexity)"
            )

        sq = np.sum(X**2, axis=1)
        D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
        cond, self.entropies_ = _conditional_affinities(D, self.perplexity)
        P = (cond + cond.T) / (2.0 * n)
        P = np.maximum(P, 1e-12)
        np.fill_diagonal(P, 0.0)

        rng = np.random.default_rng(self.seed)
        Y = rng.standard_normal((n, 2)) * 1e-4
        update = np.zeros_like(Y)

        def q_of(Yc):
            sqy = np.sum(Yc**2, axis=1)
            num = 1.0 / (1.0 + np.maximum(sqy[:, None] + sqy[None, :] - 2.0 * (Yc @ Yc.T), 0.0))
            np.fill_diagonal(num, 0.0)
            Q = np.maximum(num / num.sum(), 1e-12)
            return num, Q

        _, Q0 = q_of(Y)
        self.kl_initial_ = _kl_divergence(P, Q0)

        exaggerate_until = min(self.exaggeration_iters, self.iterations // 2)
        for it in range(self.iterations):
            Pe = P * self.early_exaggeration if it < exaggerate_until else P
            num, Q = q_of(Y)
            W = (Pe - Q) * num
            grad = 4.0 * ((np.diag(W.sum(axis=1)) - W) @ Y)
            momentum = self.momentum_early if it < exaggerate_until else self.momentum_late
            update = momentum * update - self.step_size * grad
            Y = Y + update
            Y = Y - Y.mean(axis=0)

        _, Qf = q_of(Y)
        self.kl_final_ = _kl_divergence(P, Qf)
        return Y


def tsne2(
    fm: FeatureMatrix,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
) -> Embedding2D:
    model = TSNE2(perplexity=perplexity, iterations=iterations, seed=seed)
    points = model.fit_transform(fm.values)
    return Embedding2D(
        points=points,
        labels=None if fm.labels is None else fm.labels.copy(),
        method="tsne",
        metadata={
            "perplexity": perplexity,
            "iterations": iterations,
            "final_kl": model.kl_final_,
            "initial_kl": model.kl_initial_,
        },
    )


def save_embedding_csv(embedding: Embedding2D, path) -> None:
    """Scatter CSV: header x,y,label; row order equals store order."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    labels = embedding.labels
    lines = ["x,y,label"]
    for i, (x, y) in enumerate(embedding.points):
        lab = "" if labels is None else str(int(labels[i]))
        lines.append(f"{float(x)!r},{float(y)!r},{lab}")
    out.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


@dataclass
class HeatmapArtifact:
    matrix: np.ndarray  # clamped values, rows sorted class 1 then class 0
    row_order: np.ndarray  # original store indices in display order
    labels: np.ndarray
    clamp: tuple[float, float] = HEATMAP_CLAMP


def feature_heatmap(fm: FeatureMatrix) -> HeatmapArtifact:
    """Sample x feature heat matrix: normal-class block on top, values clamped for display."""
    if fm.labels is None:
        raise ValueError("heatmap needs a labeled feature store")
    # Class 1 (normal) block first, store order preserved inside each block.
    order = np.argsort(1 - fm.labels.astype(np.int64), kind="stable")
    lo, hi = HEATMAP_CLAMP
    matrix = np.clip(fm.values[order].astype(np.float64), lo, hi)
    return HeatmapArtifact(matrix=matrix, row_order=order, labels=fm.labels[order])


def write_heatmap(artifact: HeatmapArtifact, prefix) -> dict[str, Path]:
    """Emit <prefix>.pgm (P5), <prefix>.csv, and a JSON sidecar."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    lo, hi = artifact.clamp
    h, w = artifact.matrix.shape

    levels = np.rint((artifact.matrix - lo) / (hi - lo) * 255.0).astype(np.uint8)
    pgm_path = prefix.with_suffix(".pgm")
    pgm_path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + levels.tobytes())

    csv_path = prefix.with_suffix(".csv")
    with csv_path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in artifact.matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

    meta_path = prefix.with_suffix(".json")
    meta = {
        "clamp": [lo, hi],
        "shape": [int(h), int(w)],
        "row_order": [int(i) for i in artifact.row_order],
        "labels": [int(v) for v in artifact.labels],
        "sort": "label 1 block first, store order within blocks",
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return {"pgm": pgm_path, "csv": csv_path, "json": meta_path}

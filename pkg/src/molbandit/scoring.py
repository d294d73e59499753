"""Probabilistic activity scorer: L2-regularized logistic regression over
sparse fingerprint counts, refit from scratch on the full observation history
each analyze step.

The objective is mean log-loss plus l2/(2n) * ||w||^2 (bias unregularized),
minimized by Nesterov-accelerated full-batch gradient descent with step 1/L,
stopping at gradient norm < tol or after max_epochs epochs. With a
single-class training set the fit degenerates to a prior-only model that
emits the class base rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit

from .fingerprint import FP_DIM, Fingerprint

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScoringHyper:
    l2: float = 1.0
    max_epochs: int = 500
    tol: float = 1e-6
    dim: int = FP_DIM
    balanced: bool = False  # reweight classes to equal mass


class TrainingSet:
    """Append-only (fingerprint, observed label) store."""

    def __init__(self, dim: int = FP_DIM):
        self.dim = dim
        self.fps: list[Fingerprint] = []
        self.labels: list[int] = []

    def add(self, fp: Fingerprint, label: int):
        self.fps.append(fp)
        self.labels.append(int(label))

    def add_many(self, fps, labels):
        for fp, y in zip(fps, labels):
            self.add(fp, y)

    def __len__(self):
        return len(self.fps)


def _to_csr(fps, dim: int) -> sparse.csr_matrix:
    indptr = np.zeros(len(fps) + 1, dtype=np.int64)
    rows = []
    for k, fp in enumerate(fps):
        row = fp.row()
        rows.append(row)
        indptr[k + 1] = indptr[k] + len(row[0])
    if rows:
        indices = np.concatenate([r[0] for r in rows])
        data = np.concatenate([r[1] for r in rows])
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0, dtype=np.float64)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(fps), dim))


@dataclass
class ScoreModel:
    dim: int
    weights: np.ndarray | None  # None for prior-only models
    bias: float
    base_rate: float
    prior_only: bool
    n_train: int

    def predict(self, fps) -> np.ndarray:
        if self.prior_only:
            return np.full(len(fps), self.base_rate, dtype=np.float64)
        if len(fps) == 0:
            return np.zeros(0, dtype=np.float64)
        X = _to_csr(fps, self.dim)
        return expit(X @ self.weights + self.bias)


def _spectral_norm_sq(X: sparse.csr_matrix, iters: int = 40) -> float:
    # power iteration on X^T X from a fixed start vector (deterministic)
    v = np.ones(X.shape[1], dtype=np.float64)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = X.T @ (X @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 1.0
        lam = nw
        v = w / nw
    return float(lam)


def fit(train: TrainingSet, hyper: ScoringHyper = ScoringHyper()) -> ScoreModel:
    """Fit the scorer on the accumulated training set (deterministic)."""
    n = len(train)
    if n == 0:
        raise ValueError("empty training set")
    y = np.array(train.labels, dtype=np.float64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        # degenerate single-class data: prior-only fallback
        return ScoreModel(train.dim, None, 0.0, n_pos / n, True, n)

    X = _to_csr(train.fps, train.dim)
    if hyper.balanced:
        sw = np.where(y == 1.0, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    else:
        sw = np.ones(n)
    sw = sw / n

    lam = hyper.l2 / n
    lip = 0.25 * _spectral_norm_sq(X) / n + lam
    step = 1.0 / lip

    w = np.zeros(train.dim, dtype=np.float64)
    b = 0.0
    w_prev = w
    b_prev = b
    for epoch in range(hyper.max_epochs):
        beta = epoch / (epoch + 3.0)
        wl = w + beta * (w - w_prev)
        bl = b + beta * (b - b_prev)
        r = (expit(X @ wl + bl) - y) * sw
        gw = X.T @ r + lam * wl
        gb = float(r.sum())
        w_prev, b_prev = w, b
        w = wl - step * gw
        b = bl - step * gb
        if np.sqrt(np.dot(gw, gw) + gb * gb) < hyper.tol:
            break
    return ScoreModel(train.dim, w, float(b), n_pos / n, False, n)


def predict_proba(model: ScoreModel, fps) -> np.ndarray:
    """One probability per fingerprint, each in [0, 1]."""
    return model.predict(fps)


def save_model(model: ScoreModel, path):
    """Versioned binary blob (npz) so interrupted runs can be resumed."""
    np.savez(
        path,
        format_version=np.int64(MODEL_FORMAT_VERSION),
        dim=np.int64(model.dim),
        prior_only=np.int64(model.prior_only),
        base_rate=np.float64(model.base_rate),
        bias=np.float64(model.bias),
        n_train=np.int64(model.n_train),
        weights=model.weights if model.weights is not None else np.zeros(0),
    )


def load_model(path) -> ScoreModel:
    blob = np.load(path)
    version = int(blob["format_version"])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    prior_only = bool(blob["prior_only"])
    weights = None if prior_only else blob["weights"]
    return ScoreModel(
        dim=int(blob["dim"]),
        weights=weights,
        bias=float(blob["bias"]),
        base_rate=float(blob["base_rate"]),
        prior_only=prior_only,
        n_train=int(blob["n_train"]),
    )


def auc(labels, scores) -> float:
    """Rank-based AUC with tie correction (average ranks)."""
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[y == 1.0].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

"""K-means on the learned representation and the four clustering scores."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DataError

METRIC_NAMES = ("acc", "nmi", "ari", "fscore")
RESULT_COLUMNS = ("variant", "eta", "lambda", "seed", "epoch", *METRIC_NAMES)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int


def _kmeans_plusplus(X, n_clusters, rng):
    N = X.shape[0]
    centers = np.empty((n_clusters, X.shape[1]))
    centers[0] = X[rng.integers(N)]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, n_clusters):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(N)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, N - 1)
        centers[c] = X[idx]
        closest = np.minimum(closest, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def _assign(X, centers):
    d = (
        (X ** 2).sum(axis=1)[:, None]
        - 2.0 * X @ centers.T
        + (centers ** 2).sum(axis=1)[None, :]
    )
    np.maximum(d, 0.0, out=d)
    labels = d.argmin(axis=1)
    return labels, d[np.arange(X.shape[0]), labels]


def _lloyd(X, centers, max_iter, tol):
    n_clusters = centers.shape[0]
    for it in range(1, max_iter + 1):
        labels, dist = _assign(X, centers)
        new = centers.copy()
        counts = np.bincount(labels, minlength=n_clusters)
        taken = set()
        for c in range(n_clusters):
            if counts[c] > 0:
                new[c] = X[labels == c].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centre
                for idx in np.argsort(-dist, kind="stable"):
                    if int(idx) not in taken:
                        taken.add(int(idx))
                        new[c] = X[idx]
                        dist[idx] = 0.0
                        break
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < tol:
            break
    labels, dist = _assign(X, centers)
    return labels, centers, float(dist.sum()), it


def kmeans_fit(X, n_clusters, seed=0, restarts=10, max_iter=300, tol=1e-6) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds, keeping the lowest-inertia restart."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("kmeans expects a matrix")
    if not 1 <= n_clusters <= X.shape[0]:
        raise DataError(f"need 1 <= n_clusters <= N, got {n_clusters} for N={X.shape[0]}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        init = _kmeans_plusplus(X, n_clusters, rng)
        labels, centers, inertia, n_iter = _lloyd(X, init, max_iter, tol)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, centers, inertia, n_iter)
    return best


def kmeans(X, n_clusters, seed=0, restarts=10, max_iter=300, tol=1e-6) -> np.ndarray:
    return kmeans_fit(X, n_clusters, seed, restarts, max_iter, tol).labels


# -- scores ---------------------------------------------------------------------


def contingency(pred, truth) -> np.ndarray:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise DataError(f"label vectors differ in length: {pred.shape} vs {truth.shape}")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def accuracy_hungarian(pred, truth) -> float:
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information over the geometric mean of the two entropies."""
    table = contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_truth = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    nz = table > 0
    joint = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / n ** 2
    mi = float((joint * (np.log(joint) - np.log(outer))).sum())
    return float(np.clip(mi / np.sqrt(h_pred * h_truth), 0.0, 1.0))


def _pairs(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(pred, truth) -> float:
    table = contingency(pred, truth)
    n = table.sum()
    index = _pairs(table).sum()
    a = _pairs(table.sum(axis=1)).sum()
    b = _pairs(table.sum(axis=0)).sum()
    expected = a * b / _pairs(n)
    max_index = 0.5 * (a + b)
    if max_index == expected:
        # both partitions trivial in the same way (single cluster or all singletons)
        return 1.0
    return float((index - expected) / (max_index - expected))


def pairwise_fscore(pred, truth) -> float:
    """F-measure over sample pairs, a pair being positive when co-clustered."""
    table = contingency(pred, truth)
    tp = _pairs(table).sum()
    if tp == 0:
        return 0.0
    precision = tp / _pairs(table.sum(axis=1)).sum()
    recall = tp / _pairs(table.sum(axis=0)).sum()
    return float(2 * precision * recall / (precision + recall))


def score(pred, truth) -> dict:
    return {
        "acc": accuracy_hungarian(pred, truth),
        "nmi": nmi(pred, truth),
        "ari": ari(pred, truth),
        "fscore": pairwise_fscore(pred, truth),
    }


@dataclass
class MetricsRecord:
    acc: float
    nmi: float
    ari: float
    fscore: float
    seed: object = None
    epoch: int | None = None
    variant: str = ""
    eta: float | None = None
    lam: float | None = None
    per_seed: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        for name in ("acc", "nmi", "fscore"):
            value = getattr(self, name)
            if not -1e-12 <= value <= 1 + 1e-12:
                raise DataError(f"{name}={value} outside [0, 1]")
        if not -0.5 - 1e-12 <= self.ari <= 1 + 1e-12:
            raise DataError(f"ari={self.ari} outside [-0.5, 1]")

    def as_row(self) -> dict:
        d = asdict(self)
        d.pop("per_seed")
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in RESULT_COLUMNS}


def evaluate(F, labels, n_clusters=None, seeds=(0, 1, 2, 3, 4), restarts=10, **meta) -> MetricsRecord:
    """Cluster ``F`` once per seed and average the scores."""
    if labels is None:
        raise DataError("ground-truth labels are required for evaluation")
    labels = np.asarray(labels)
    if n_clusters is None:
        n_clusters = len(np.unique(labels))
    runs = [score(kmeans(F, n_clusters, seed=s, restarts=restarts), labels) for s in seeds]
    mean = {name: float(np.mean([r[name] for r in runs])) for name in METRIC_NAMES}
    return MetricsRecord(seed=meta.pop("seed", list(seeds)), per_seed=runs, **mean, **meta)

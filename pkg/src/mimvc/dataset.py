"""Loading, scaling, masking and partitioning of incomplete multi-view data.

A dataset directory looks like::

    manifest.json        {"views": ["lbp", "gist"], "n": 210, "v": 2, "c": 7}
    view_lbp.csv         N rows, no header
    view_gist.csv
    labels.csv           optional, one integer per line
    mask.csv             optional, N rows of V comma-separated 0/1
"""

from __future__ import annotations

import json
import math
import os
import shutil
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError

MASK_SCHEMES = ("uniform_row_constrained",)


@dataclass
class MultiViewDataset:
    """Per-view feature matrices sharing one row order.

    Attributes
    ----------
    views : list of ndarray
        ``views[v]`` has shape ``(N, D_v)``. Rows of samples missing from a
        view are placeholders and are never read by the model.
    labels : ndarray of int or None
        Ground truth in ``0..C-1``.
    mask : ndarray of shape (N, V)
        ``mask[i, v] == 1`` iff sample ``i`` is observed in view ``v``.
    names : list of str
    """

    views: list
    labels: np.ndarray | None = None
    mask: np.ndarray | None = None
    names: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.views = [np.asarray(X, dtype=np.float64) for X in self.views]
        if not self.views:
            raise DataError("dataset needs at least one view")
        if not self.names:
            self.names = [f"v{i}" for i in range(len(self.views))]
        if self.mask is None:
            self.mask = np.ones((self.n_samples, self.n_views), dtype=np.int64)
        self.mask = np.asarray(self.mask).astype(np.int64)
        if self.labels is not None:
            self.labels = remap_labels(self.labels)
        self.validate()

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_clusters(self) -> int | None:
        if self.labels is None:
            return self.meta.get("c")
        return int(self.labels.max()) + 1

    @property
    def dims(self) -> list:
        return [X.shape[1] for X in self.views]

    def validate(self):
        N = self.n_samples
        for name, X in zip(self.names, self.views):
            if X.ndim != 2:
                raise DataError(f"view {name!r} is not a matrix")
            if X.shape[0] != N:
                raise DataError(
                    f"row-count mismatch: view {name!r} has {X.shape[0]} rows, expected {N}"
                )
        if len(self.names) != self.n_views:
            raise DataError("number of names does not match number of views")
        check_mask(self.mask, N, self.n_views)
        if self.labels is not None:
            if self.labels.shape != (N,):
                raise DataError(f"labels must have length {N}, got {self.labels.shape}")
            if len(np.unique(self.labels)) < 2:
                raise DataError("labels must contain at least 2 distinct values")

    def with_mask(self, mask) -> "MultiViewDataset":
        return MultiViewDataset(
            views=[X.copy() for X in self.views],
            labels=None if self.labels is None else self.labels.copy(),
            mask=np.asarray(mask),
            names=list(self.names),
            meta=dict(self.meta),
        )


@dataclass(frozen=True)
class ObservedPartition:
    """Index maps standing in for the observed/missing permutation matrices.

    ``observed[v]`` lists the global rows present in view ``v`` in increasing
    order; gathering ``X[observed[v]]`` yields the observed block and
    scattering back through the same indices restores the global order.
    """

    observed: tuple
    missing: tuple
    n_samples: int

    @property
    def n_views(self) -> int:
        return len(self.observed)

    def gather(self, X, v):
        return X[self.observed[v]]

    def scatter(self, Z, v, fill=0.0):
        """Place the observed block ``Z`` back at global rows; missing rows get ``fill``."""
        Z = np.asarray(Z)
        if Z.shape[0] != len(self.observed[v]):
            raise DataError(
                f"view {v}: block has {Z.shape[0]} rows, expected {len(self.observed[v])}"
            )
        out = np.full((self.n_samples,) + Z.shape[1:], fill, dtype=Z.dtype)
        out[self.observed[v]] = Z
        return out


@dataclass(frozen=True)
class MaskSpec:
    missing_rate: float = 0.0
    seed: int = 0
    scheme: str = "uniform_row_constrained"

    def validate(self, n_views: int):
        if self.scheme not in MASK_SCHEMES:
            raise DataError(f"unknown mask scheme {self.scheme!r}")
        upper = (n_views - 1) / n_views
        eta = self.missing_rate
        if not (0.0 <= eta < upper or eta == 0.0):
            raise DataError(
                f"missing rate {eta} out of range: need 0 <= eta < (V-1)/V = {upper:.4g}"
            )


def remap_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DataError("labels must be a vector")
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.astype(np.int64)


def check_mask(mask, n_samples=None, n_views=None):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DataError("mask must be an N x V matrix")
    if n_samples is not None and mask.shape != (n_samples, n_views):
        raise DataError(f"mask has shape {mask.shape}, expected {(n_samples, n_views)}")
    if not np.isin(mask, (0, 1)).all():
        raise DataError("mask entries must be 0 or 1")
    empty = np.flatnonzero(mask.sum(axis=1) == 0)
    if empty.size:
        raise DataError(f"mask rows with no observed view: {empty[:10].tolist()}")
    return mask


def scale_min_max(X, observed=None) -> np.ndarray:
    """Map every column to [0, 1]; constant columns become 0.

    If ``observed`` (row indices) is given, statistics come from those rows
    only and every other row is zeroed.
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X if observed is None else X[observed]).all():
        raise DataError("scale_min_max: input contains NaN or Inf")
    rows = X if observed is None else X[observed]
    out = np.zeros_like(X)
    if rows.shape[0] == 0:
        return out
    lo = rows.min(axis=0)
    span = rows.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (rows - lo) / safe, 0.0)
    if observed is None:
        return scaled
    out[observed] = scaled
    return out


def scale_dataset(dataset: MultiViewDataset) -> MultiViewDataset:
    part = partition_observed(dataset.mask)
    views = [scale_min_max(X, part.observed[v]) for v, X in enumerate(dataset.views)]
    return MultiViewDataset(
        views=views,
        labels=dataset.labels,
        mask=dataset.mask,
        names=list(dataset.names),
        meta=dict(dataset.meta),
    )


def generate_mask(n_samples: int, n_views: int, spec: MaskSpec) -> np.ndarray:
    """Drop ``round(eta * N * V)`` cells uniformly at random, never emptying a row.

    Cells are visited in one seeded random order; a cell is dropped unless it
    is the last observed view of its row. Because ``eta < (V-1)/V`` a single
    pass always reaches the target.
    """
    spec.validate(n_views)
    mask = np.ones((n_samples, n_views), dtype=np.int64)
    target = int(math.floor(spec.missing_rate * n_samples * n_views + 0.5))
    if target == 0:
        return mask
    rng = np.random.default_rng(spec.seed)
    remaining = np.full(n_samples, n_views)
    dropped = 0
    for cell in rng.permutation(n_samples * n_views):
        i, v = divmod(int(cell), n_views)
        if remaining[i] > 1:
            mask[i, v] = 0
            remaining[i] -= 1
            dropped += 1
            if dropped == target:
                break
    if dropped != target:  # unreachable for valid specs
        raise DataError(f"could only drop {dropped} of {target} cells")
    return mask


def partition_observed(mask) -> ObservedPartition:
    mask = check_mask(mask)
    observed = tuple(np.flatnonzero(mask[:, v] == 1) for v in range(mask.shape[1]))
    missing = tuple(np.flatnonzero(mask[:, v] == 0) for v in range(mask.shape[1]))
    return ObservedPartition(observed=observed, missing=missing, n_samples=mask.shape[0])


# -- file I/O -----------------------------------------------------------------


def _read_matrix(path, what, dtype=float):
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    try:
        data = np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)
    except ValueError as exc:
        raise DataError(f"non-numeric cell in {what} ({path}): {exc}") from None
    return data


def load_dataset(path) -> MultiViewDataset:
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataError(f"missing file: {manifest_path}")
    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"cannot parse {manifest_path}: {exc}") from None
    names = [str(n) for n in manifest.get("views", [])]
    if not names:
        raise DataError("manifest lists no views")
    views = []
    for name in names:
        X = _read_matrix(os.path.join(path, f"view_{name}.csv"), f"view {name!r}")
        if not np.isfinite(X).all():
            raise DataError(f"view {name!r} contains NaN or Inf")
        views.append(X)
    n = manifest.get("n", views[0].shape[0])
    for name, X in zip(names, views):
        if X.shape[0] != n:
            raise DataError(
                f"row-count mismatch: view {name!r} has {X.shape[0]} rows, expected {n}"
            )
    if "v" in manifest and manifest["v"] != len(names):
        raise DataError(f"manifest says V={manifest['v']} but lists {len(names)} views")

    labels = None
    labels_path = os.path.join(path, "labels.csv")
    if os.path.exists(labels_path):
        labels = _read_matrix(labels_path, "labels", dtype=np.int64).ravel()

    mask = None
    mask_path = os.path.join(path, "mask.csv")
    if os.path.exists(mask_path):
        mask = _read_matrix(mask_path, "mask", dtype=np.int64)

    meta = {k: v for k, v in manifest.items() if k not in ("views",)}
    return MultiViewDataset(views=views, labels=labels, mask=mask, names=names, meta=meta)


def _write_int_rows(path, rows):
    with open(path, "w") as fh:
        for row in np.atleast_2d(rows):
            fh.write(",".join(str(int(x)) for x in row) + "\n")


def save_dataset(dataset: MultiViewDataset, path, write_mask=None):
    """Write ``dataset`` in the directory layout read by :func:`load_dataset`.

    The mask file is written when ``write_mask`` is true, or by default when
    the mask is not all ones.
    """
    os.makedirs(path, exist_ok=True)
    manifest = dict(dataset.meta)
    manifest.update(views=list(dataset.names), n=dataset.n_samples, v=dataset.n_views)
    if dataset.labels is not None:
        manifest["c"] = dataset.n_clusters
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, X in zip(dataset.names, dataset.views):
        np.savetxt(os.path.join(path, f"view_{name}.csv"), X, delimiter=",", fmt="%.17g")
    if dataset.labels is not None:
        _write_int_rows(os.path.join(path, "labels.csv"), dataset.labels[:, None])
    if write_mask is None:
        write_mask = not bool(dataset.mask.all())
    if write_mask:
        _write_int_rows(os.path.join(path, "mask.csv"), dataset.mask)


def mask_directory(in_dir, out_dir, spec: MaskSpec) -> np.ndarray:
    """Copy a complete dataset directory and add a generated ``mask.csv``."""
    dataset = load_dataset(in_dir)
    mask = generate_mask(dataset.n_samples, dataset.n_views, spec)
    os.makedirs(out_dir, exist_ok=True)
    for fname in os.listdir(in_dir):
        if fname.startswith("view_") or fname == "labels.csv":
            src, dst = os.path.join(in_dir, fname), os.path.join(out_dir, fname)
            if os.path.abspath(src) != os.path.abspath(dst):
                shutil.copyfile(src, dst)
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    manifest.update(eta=spec.missing_rate, mask_seed=spec.seed, mask_scheme=spec.scheme)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_int_rows(os.path.join(out_dir, "mask.csv"), mask)
    return mask


# -- synthetic data -----------------------------------------------------------


def make_multiview_blobs(
    n_samples=300, n_clusters=3, dims=(8, 12, 16), sigma=0.15, seed=0
) -> MultiViewDataset:
    """Gaussian blobs seen through several views.

    In each view the cluster centres are scaled basis vectors with pairwise
    distance 1, rotated by a random orthogonal matrix. Samples are assigned
    to clusters in equal shares.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % n_clusters
    rng.shuffle(labels)
    views = []
    for D in dims:
        if D < n_clusters:
            raise DataError(f"view dimension {D} smaller than number of clusters")
        centers = np.zeros((n_clusters, D))
        centers[:, :n_clusters] = np.eye(n_clusters) / math.sqrt(2.0)
        Q, _ = np.linalg.qr(rng.standard_normal((D, D)))
        centers = centers @ Q
        views.append(centers[labels] + sigma * rng.standard_normal((n_samples, D)))
    names = [f"v{i}" for i in range(len(dims))]
    return MultiViewDataset(views=views, labels=labels, names=names)

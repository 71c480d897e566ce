"""Adaptive-neighbour graphs, GCN normalisation and mask-informed graph fusion."""

from __future__ import annotations

import numpy as np

from .exceptions import DataError

# Below this the closed-form denominator is treated as zero (all k+1 nearest
# distances coincide).
_DEGENERATE_TOL = 1e-12


def squared_distances(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    sq = np.einsum("ij,ij->i", Z, Z)
    D = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def adaptive_knn_weights(Z, k: int) -> np.ndarray:
    """Row-stochastic k-nearest-neighbour weights before symmetrisation.

    Row ``i`` gives its ``k`` nearest neighbours (squared Euclidean distance
    ``d``) the weights ``(d_(k+1) - d_j) / (k d_(k+1) - sum_h d_(h))`` and
    everyone else zero, which is the closed-form solution of the
    probabilistic neighbour assignment with the regulariser tuned so that
    exactly ``k`` neighbours are active.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise DataError("adaptive_knn_graph expects a matrix")
    M = Z.shape[0]
    if not 1 <= k < M:
        raise DataError(f"need 1 <= k < number of rows ({M}), got k={k}")
    if not np.isfinite(Z).all():
        raise DataError("adaptive_knn_graph: non-finite input")
    D = squared_distances(Z)
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")[:, : k + 1]
    rows = np.arange(M)[:, None]
    d = D[rows, order]  # (M, k+1), ascending, self excluded
    d_next = d[:, k:k + 1]
    denom = k * d_next[:, 0] - d[:, :k].sum(axis=1)
    W = np.zeros((M, M))
    degenerate = denom <= _DEGENERATE_TOL * np.maximum(1.0, np.abs(d_next[:, 0]))
    w = np.empty((M, k))
    ok = ~degenerate
    w[ok] = (d_next[ok] - d[ok, :k]) / denom[ok, None]
    w[degenerate] = 1.0 / k
    W[rows, order[:, :k]] = w
    return W


def adaptive_knn_graph(Z, k: int) -> np.ndarray:
    """Symmetric adaptive-neighbour graph ``(W + W^T) / 2`` with zero diagonal."""
    W = adaptive_knn_weights(Z, k)
    A = 0.5 * (W + W.T)
    np.fill_diagonal(A, 0.0)
    return A


def gcn_normalize(A) -> np.ndarray:
    """Return ``D^{-1/2} (A + I) D^{-1/2}`` with ``D`` the degrees of ``A + I``."""
    A = np.asarray(A, dtype=np.float64)
    A_hat = A + np.eye(A.shape[0])
    inv_sqrt = 1.0 / np.sqrt(A_hat.sum(axis=1))
    return inv_sqrt[:, None] * A_hat * inv_sqrt[None, :]


def lift_graph(A, observed_idx, n_samples: int) -> np.ndarray:
    """Scatter an observed-block graph into the global ``N x N`` index space."""
    A = np.asarray(A, dtype=np.float64)
    observed_idx = np.asarray(observed_idx)
    if A.shape != (len(observed_idx), len(observed_idx)):
        raise DataError(
            f"graph of shape {A.shape} does not match {len(observed_idx)} observed samples"
        )
    out = np.zeros((n_samples, n_samples))
    out[np.ix_(observed_idx, observed_idx)] = A
    return out


def restrict_graph(A, observed_idx) -> np.ndarray:
    return np.asarray(A)[np.ix_(observed_idx, observed_idx)]


def fuse_graphs(lifted, mask, S, masked: bool = True) -> np.ndarray:
    """Mask-informed average of the lifted view graphs and the common graph ``S``.

    Entry ``(i, j)`` averages ``S`` with those view graphs in which both
    samples are observed. With ``masked=False`` every view graph counts,
    i.e. a plain mean over ``V + 1`` matrices.
    """
    mask = np.asarray(mask, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    N, V = mask.shape
    if len(lifted) != V:
        raise DataError(f"expected {V} lifted graphs, got {len(lifted)}")
    for A in list(lifted) + [S]:
        if np.shape(A) != (N, N):
            raise DataError(f"graph of shape {np.shape(A)} does not match N={N}")
    num = S.copy()
    if masked:
        # sum_v r_ij^v == (M M^T)_ij; the rank-one masks never exist densely
        den = 1.0 + mask @ mask.T
        for v, A in enumerate(lifted):
            m = mask[:, v]
            num += (np.asarray(A) * m[:, None]) * m[None, :]
    else:
        den = float(V + 1)
        for A in lifted:
            num += A
    out = num / den
    np.fill_diagonal(out, 0.0)
    return out


def to_coo_rows(A, tol: float = 0.0):
    """Yield ``(i, j, weight)`` for entries with ``|weight| > tol``."""
    A = np.asarray(A)
    ii, jj = np.nonzero(np.abs(A) > tol)
    for i, j in zip(ii, jj):
        yield int(i), int(j), float(A[i, j])


def write_coo_csv(A, path, tol: float = 0.0):
    with open(path, "w") as fh:
        fh.write("i,j,weight\n")
        for i, j, w in to_coo_rows(A, tol):
            fh.write(f"{i},{j},{w!r}\n")

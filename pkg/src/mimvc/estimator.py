"""Scikit-learn style front end.

``X`` is either a :class:`~mimvc.dataset.MultiViewDataset` or a list of
per-view arrays with the same number of rows. Missing views can be given by
an explicit ``mask`` or by rows that are entirely NaN.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import MultiViewDataset, check_mask
from .evaluation import _assign, kmeans_fit
from .exceptions import DataError
from .network import HIDDEN_DIMS
from .training import TrainConfig, train


def check_views(X, mask=None, labels=None) -> MultiViewDataset:
    """Validate multi-view input and return it as a dataset.

    A row that is all NaN in some view marks that view as missing for the
    sample unless ``mask`` is given. Any other non-finite entry is an error.
    """
    if isinstance(X, MultiViewDataset):
        if mask is not None:
            X = X.with_mask(mask)
        if labels is not None:
            X = MultiViewDataset(X.views, labels, X.mask, list(X.names), dict(X.meta))
        return X
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    if not isinstance(X, (list, tuple)) or not X:
        raise DataError("X must be a non-empty list of 2-D arrays, one per view")
    views = []
    for v, Xv in enumerate(X):
        Xv = np.array(Xv, dtype=np.float64)
        if Xv.ndim != 2:
            raise DataError(f"view {v} must be 2-D, got shape {Xv.shape}")
        views.append(Xv)
    if len({Xv.shape[0] for Xv in views}) != 1:
        raise DataError(f"views have different row counts: {[Xv.shape[0] for Xv in views]}")

    absent = np.stack([np.isnan(Xv).all(axis=1) for Xv in views], axis=1)
    if mask is None:
        mask = (~absent).astype(np.int8)
    mask = check_mask(mask, views[0].shape[0], len(views))
    for v, Xv in enumerate(views):
        rows = mask[:, v].astype(bool)
        if not np.isfinite(Xv[rows]).all():
            raise DataError(f"view {v} has non-finite values in observed rows")
        Xv[~rows] = 0.0
    return MultiViewDataset(views=views, labels=labels, mask=mask)


class MaskedContrastiveClustering(ClusterMixin, TransformerMixin, BaseEstimator):
    """Incomplete multi-view clustering with mask-informed fusion.

    Parameters mirror :class:`~mimvc.training.TrainConfig`. ``n_clusters`` is
    required unless ``y`` is passed to :meth:`fit`.

    Attributes
    ----------
    state_ : ModelState
    history_ : TrainHistory
    embedding_ : ndarray of shape (n_samples, latent_dim)
        Fused representation of the training samples.
    labels_ : ndarray of shape (n_samples,)
    cluster_centers_ : ndarray of shape (n_clusters, latent_dim)
    """

    def __init__(self, n_clusters=None, epochs=1500, learning_rate=1e-3, lam=1.0, tau=1.0,
                 k=15, seed=0, variant="full", hidden_dims=HIDDEN_DIMS, use_bias=True,
                 graph_refresh_period=1, scale=True, center_latents=False,
                 kmeans_restarts=10):
        self.n_clusters = n_clusters
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.lam = lam
        self.tau = tau
        self.k = k
        self.seed = seed
        self.variant = variant
        self.hidden_dims = hidden_dims
        self.use_bias = use_bias
        self.graph_refresh_period = graph_refresh_period
        self.scale = scale
        self.center_latents = center_latents
        self.kmeans_restarts = kmeans_restarts

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params(), cluster_on="F")

    def fit(self, X, y=None, mask=None):
        ds = check_views(X, mask, labels=y)
        config = self._config()
        if config.n_clusters is None and ds.n_clusters is None:
            raise DataError("n_clusters must be set when no labels are given")
        self.state_, self.history_ = train(ds, config)
        self.embedding_ = self.state_.embed(ds)
        C = self.state_.model.n_clusters
        km = kmeans_fit(self.embedding_, C, seed=self.seed, restarts=self.kmeans_restarts)
        self.labels_ = km.labels
        self.cluster_centers_ = km.centers
        self.n_features_in_ = sum(ds.dims)
        return self

    def transform(self, X, mask=None):
        """Fused representation of ``X``.

        The view graphs are rebuilt on ``X`` itself, so ``X`` needs at least
        ``k + 2`` observed samples per view.
        """
        check_is_fitted(self, "state_")
        ds = check_views(X, mask)
        if ds.dims != self.state_.model.dims:
            raise DataError(f"expected view widths {self.state_.model.dims}, got {ds.dims}")
        return self.state_.embed(ds)

    def predict(self, X, mask=None):
        """Nearest learned cluster centre for each sample."""
        labels, _ = _assign(self.transform(X, mask), self.cluster_centers_)
        return labels

    def fit_predict(self, X, y=None, mask=None):
        return self.fit(X, y, mask).labels_

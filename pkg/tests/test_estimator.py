import numpy as np
import pytest
from sklearn.base import clone

from mimvc import MaskedContrastiveClustering, check_views, make_multiview_blobs
from mimvc.exceptions import DataError

FAST = dict(epochs=20, hidden_dims=(16, 12, 8), k=5, kmeans_restarts=2)


@pytest.fixture(scope="module")
def blobs():
    return make_multiview_blobs(n_samples=45, dims=(4, 6), seed=0)


def test_get_params_and_clone():
    est = MaskedContrastiveClustering(n_clusters=3, lam=0.1, **FAST)
    params = est.get_params()
    assert params["lam"] == 0.1 and params["n_clusters"] == 3
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(tau=0.5)
    assert est.tau == 0.5


def test_fit_predict(blobs):
    est = MaskedContrastiveClustering(**FAST)
    labels = est.fit_predict(blobs.views, blobs.labels)
    assert labels.shape == (45,) and set(labels) <= {0, 1, 2}
    assert est.embedding_.shape == (45, 8)
    assert len(est.history_) == 20
    assert np.array_equal(est.predict(blobs.views), labels)
    np.testing.assert_allclose(est.transform(blobs.views), est.embedding_)


def test_nan_rows_mark_missing(blobs):
    views = [v.copy() for v in blobs.views]
    views[1][:5] = np.nan
    ds = check_views(views)
    assert (ds.mask[:5, 1] == 0).all() and ds.mask[5:].all()
    assert not np.isnan(ds.views[1]).any()


def test_explicit_mask(blobs):
    mask = np.ones((45, 2), dtype=int)
    mask[:3, 0] = 0
    ds = check_views(blobs.views, mask=mask)
    assert np.array_equal(ds.mask, mask)


def test_validation_errors(blobs):
    with pytest.raises(DataError):
        check_views([np.zeros((3, 2)), np.zeros((4, 2))])
    bad = [v.copy() for v in blobs.views]
    bad[0][0, 0] = np.inf
    with pytest.raises(DataError):
        check_views(bad)
    with pytest.raises(DataError):
        check_views(blobs.views, mask=np.ones((45, 3)))
    with pytest.raises(DataError):
        MaskedContrastiveClustering(**FAST).fit(blobs.views)


def test_not_fitted(blobs):
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        MaskedContrastiveClustering().transform(blobs.views)


def test_width_mismatch(blobs):
    est = MaskedContrastiveClustering(n_clusters=3, **FAST).fit(blobs)
    with pytest.raises(DataError):
        est.transform([blobs.views[1], blobs.views[0]])

"""Tests for the scikit-learn style classifier wrapper."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mixdg import MixupMarginClassifier, SeededRng


def _blobs(n_per_class=12, n_classes=3, dim=6, seed=50):
    rng = SeededRng(seed)
    centers = [rng.normals(dim) * 2.0 for _ in range(n_classes)]
    X, y = [], []
    for c, center in enumerate(centers):
        for _ in range(n_per_class):
            X.append(center + rng.normals(dim) * 0.3)
            y.append(c)
    return np.stack(X), np.array(y)


def _fast_clf(**overrides):
    kwargs = dict(
        embed_dim=8,
        hidden_dim=None,
        tau=0.1,
        epochs=4,
        batch_size=12,
        learning_rate=0.05,
        random_state=0,
    )
    kwargs.update(overrides)
    return MixupMarginClassifier(**kwargs)


def test_get_params_round_trip_and_clone():
    clf = _fast_clf(margin=0.25)
    params = clf.get_params()
    assert params["margin"] == 0.25
    assert params["embed_dim"] == 8
    other = clone(clf)
    assert other.get_params() == params
    clf.set_params(lam=0.2)
    assert clf.lam == 0.2


def test_fit_predict_learns_blobs():
    X, y = _blobs()
    clf = _fast_clf().fit(X, y)
    accuracy = float(np.mean(clf.predict(X) == y))
    assert accuracy > 0.9
    assert sorted(clf.classes_) == [0, 1, 2]
    assert clf.n_features_in_ == X.shape[1]
    scores = clf.decision_function(X)
    assert scores.shape == (len(X), 3)
    assert np.array_equal(clf.classes_[np.argmax(scores, axis=1)], clf.predict(X))


def test_fit_is_deterministic():
    X, y = _blobs()
    a = _fast_clf().fit(X, y)
    b = _fast_clf().fit(X, y)
    assert np.array_equal(a.predict(X), b.predict(X))
    assert all(
        np.array_equal(w1, w2)
        for w1, w2 in zip(a.encoder_.weights, b.encoder_.weights)
    )
    assert a.history_ == b.history_
    c = _fast_clf(random_state=1).fit(X, y)
    assert not all(
        np.array_equal(w1, w2)
        for w1, w2 in zip(a.encoder_.weights, c.encoder_.weights)
    )


def test_string_labels_round_trip():
    X, y_num = _blobs(n_classes=2)
    y = np.array(["spam", "ham"])[y_num]
    clf = _fast_clf().fit(X, y)
    predictions = clf.predict(X)
    assert set(predictions) <= {"spam", "ham"}
    assert sorted(clf.classes_) == ["ham", "spam"]


def test_predict_before_fit_raises():
    X, _ = _blobs()
    with pytest.raises(NotFittedError):
        _fast_clf().predict(X)
    with pytest.raises(NotFittedError):
        _fast_clf().decision_function(X)


def test_single_class_rejected():
    X, _ = _blobs(n_classes=1)
    with pytest.raises(ValueError):
        _fast_clf().fit(X, np.zeros(len(X), dtype=int))


def test_feature_count_checked_at_predict():
    X, y = _blobs()
    clf = _fast_clf().fit(X, y)
    with pytest.raises(ValueError):
        clf.predict(X[:, :4])


def test_eval_set_tracks_history():
    X, y = _blobs()
    holdout_X, holdout_y = _blobs(seed=51)
    clf = _fast_clf()
    clf.fit(X, y, eval_set=(holdout_X, holdout_y))
    accuracies = [e.target_accuracy for e in clf.history_.entries]
    assert all(a is not None for a in accuracies)
    assert clf.history_.final_accuracy == accuracies[-1]
    assert 0.0 <= clf.history_.final_accuracy <= 100.0
    # Without an eval_set no accuracy is recorded.
    clf2 = _fast_clf().fit(X, y)
    assert clf2.history_.final_accuracy is None


def test_eval_set_unknown_labels_rejected():
    X, y = _blobs(n_classes=2)
    clf = _fast_clf()
    with pytest.raises(ValueError, match="unseen"):
        clf.fit(X, y, eval_set=(X, np.full(len(X), 7)))


def test_eval_set_does_not_change_parameters():
    X, y = _blobs()
    holdout_X, holdout_y = _blobs(seed=52)
    a = _fast_clf().fit(X, y)
    b = _fast_clf()
    b.fit(X, y, eval_set=(holdout_X, holdout_y))
    assert all(
        np.array_equal(w1, w2)
        for w1, w2 in zip(a.encoder_.weights, b.encoder_.weights)
    )


def test_hyperparameters_feed_through():
    X, y = _blobs(n_classes=2)
    clf = _fast_clf(epochs=2).fit(X, y)
    assert len(clf.history_.entries) == 2
    deep = _fast_clf(hidden_dim=10).fit(X, y)
    assert deep.encoder_.n_layers == 2
    assert deep.encoder_.weights[0].shape == (10, X.shape[1])
    shallow = _fast_clf(hidden_dim=None).fit(X, y)
    assert shallow.encoder_.n_layers == 1

"""Estimator wrapper with the usual fit/predict surface.

``MixupMarginClassifier`` bundles class table construction, encoder
initialization, and the training loop behind a scikit-learn compatible
interface, so the model slots into pipelines, grid search, and the
standard validation helpers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .losses import LossConfig
from .model import (
    DEFAULT_PROMPT_TEMPLATE,
    PromptTemplate,
    encode,
    init_encoder,
    make_class_embeddings,
)
from .numeric import BetaParams, derive_seed
from .training import TrainConfig, fit_encoder

__all__ = ["MixupMarginClassifier"]


class MixupMarginClassifier(ClassifierMixin, BaseEstimator):
    """Margin-softmax classifier trained with embedding-space mixup.

    Labels are matched zero-shot against a frozen table of per-class
    embeddings derived from prompts; ``fit`` trains the image-side
    encoder with the combined margin and mix-consistency objective.

    Parameters mirror the library's configuration dataclasses: ``tau``,
    ``margin``, ``lam``, ``beta_alpha``, ``beta_beta`` shape the loss,
    the rest drive architecture and optimization. ``random_state``
    seeds the class table, the encoder init, and the training streams.

    Example
    -------
    >>> clf = MixupMarginClassifier(epochs=3, random_state=0)
    >>> clf.fit(X_train, y_train).predict(X_test)
    """

    def __init__(
        self,
        embed_dim: int = 16,
        hidden_dim: int | None = 32,
        tau: float = 0.01,
        margin: float = 0.3,
        lam: float = 0.1,
        beta_alpha: float = 0.2,
        beta_beta: float = 0.2,
        epochs: int = 10,
        batch_size: int = 32,
        learning_rate: float = 0.01,
        momentum: float = 0.9,
        eval_every: int = 1,
        prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
        random_state: int = 0,
    ):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.tau = tau
        self.margin = margin
        self.lam = lam
        self.beta_alpha = beta_alpha
        self.beta_beta = beta_beta
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.eval_every = eval_every
        self.prompt_template = prompt_template
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        loss = LossConfig(
            tau=self.tau,
            margin=self.margin,
            lam=self.lam,
            beta=BetaParams(self.beta_alpha, self.beta_beta),
        )
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            loss=loss,
            seed=derive_seed(self.random_state, 2),
            eval_every=self.eval_every,
        )

    def fit(self, X, y, eval_set: tuple | None = None):
        """Train the encoder on (X, y).

        ``eval_set`` is an optional (X_holdout, y_holdout) pair whose
        zero-shot accuracy is tracked per epoch in ``history_``.
        """
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least two classes in y")
        names = [str(c) for c in self.classes_]
        cfg = self._train_config()
        template = PromptTemplate(self.prompt_template)
        self.class_embeddings_ = make_class_embeddings(
            names, self.embed_dim, derive_seed(self.random_state, 0), template
        )
        params = init_encoder(
            X.shape[1],
            self.embed_dim,
            self.hidden_dim,
            seed=derive_seed(self.random_state, 1),
        )
        eval_fn = None
        if eval_set is not None:
            X_hold, y_hold = eval_set
            X_hold = check_array(X_hold, dtype=np.float64)
            y_hold_idx = self._label_indices(np.asarray(y_hold))

            def eval_fn(p):
                predicted = [
                    np.argmax(self.class_embeddings_.table @ encode(p, row))
                    for row in X_hold
                ]
                return 100.0 * float(np.mean(np.array(predicted) == y_hold_idx))

        self.encoder_, self.history_ = fit_encoder(
            X, y_idx, params, self.class_embeddings_, cfg, eval_fn
        )
        self.n_features_in_ = X.shape[1]
        return self

    def _label_indices(self, y: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, self.classes_.shape[0] - 1)
        if not np.all(self.classes_[idx] == y):
            raise ValueError("eval_set contains labels unseen in y")
        return idx

    def decision_function(self, X) -> np.ndarray:
        """Similarity of each sample's embedding to every class row."""
        check_is_fitted(self, "encoder_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        table = self.class_embeddings_.table
        return np.stack([table @ encode(self.encoder_, row) for row in X])

    def predict(self, X) -> np.ndarray:
        """Zero-shot prediction: the class with the highest similarity."""
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

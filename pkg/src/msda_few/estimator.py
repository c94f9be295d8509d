"""scikit-learn compatible wrapper around the adaptation trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import MixedSourceDataset
from .trainer import METHODS, ModelConfig, OptimizerState, TrainConfig, predict_proba, train
from .weighting import ScheduleConfig, column_sums, element_weights

_ALPHA_TAGS = {0, "alpha", "a"}
_BETA_TAGS = {1, "beta", "b"}


class FEWClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Mixed-set domain adaptation classifier.

    Source samples come from two domains whose class sets are disjoint
    (``domain`` tags each source row as alpha or beta); the unlabeled target
    batch is passed to :meth:`fit` as ``X_target``.

    Parameters
    ----------
    method : {'few', 'cdan+dann', 'cdan', 'dann', 'source-only'}, default='few'
        Which loss terms are active during training.
    feature_dim : int, default=16
        Width of the learned features.
    hidden : tuple of int, default=(32, 32)
        Hidden widths of the feature extractor.
    disc_hidden : int, default=64
        Hidden width of both discriminators.
    dropout : float, default=0.5
        Dropout rate inside the discriminators.
    total_iters : int, default=3000
    batch_size : int, default=32
        Per-domain source batch size; the target batch is twice as large.
    base_lr, momentum, gamma, power : float
        SGD with momentum under ``base_lr * (1 + gamma * iter) ** -power``.
    eta, max_iter : float, int
        Ramp of the element-weight blend factor.
    delta_convention : {'paper', 'dann-shifted'}, default='paper'
    random_state : int, default=0

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
    n_features_in_ : int
    networks_ : Networks
    metrics_ : list of MetricsRecord
    element_weights_ : ndarray of shape (feature_dim,)
        Weights derived from the final classifier head.
    """

    def __init__(self, method="few", feature_dim=16, hidden=(32, 32), disc_hidden=64,
                 dropout=0.5, total_iters=3000, batch_size=32, base_lr=0.001, momentum=0.9,
                 gamma=0.001, power=0.75, eta=10.0, max_iter=10000, delta_convention="paper",
                 random_state=0):
        self.method = method
        self.feature_dim = feature_dim
        self.hidden = hidden
        self.disc_hidden = disc_hidden
        self.dropout = dropout
        self.total_iters = total_iters
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.momentum = momentum
        self.gamma = gamma
        self.power = power
        self.eta = eta
        self.max_iter = max_iter
        self.delta_convention = delta_convention
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        return TrainConfig(
            total_iters=self.total_iters, batch_alpha=self.batch_size, batch_beta=self.batch_size,
            batch_target=2 * self.batch_size, method=self.method,
            schedule=ScheduleConfig(eta=self.eta, max_iter=self.max_iter,
                                    convention=self.delta_convention),
            optimizer=OptimizerState(momentum=self.momentum, base_lr=self.base_lr,
                                     gamma=self.gamma, power=self.power),
            model=ModelConfig(feature_dim=self.feature_dim, hidden=list(self.hidden),
                              disc_hidden=self.disc_hidden, dropout=self.dropout),
            eval_every=self.total_iters, seed=self.random_state)

    def fit(self, X, y, X_target=None, domain=None):
        """Train on labeled source data and unlabeled target data.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
        y : array-like of shape (n_samples,)
        X_target : array-like of shape (n_target, n_features)
        domain : array-like of shape (n_samples,)
            ``0``/``'alpha'`` or ``1``/``'beta'`` per source row; each class
            must appear in exactly one domain.

        Returns
        -------
        self : object
        """
        X, y = check_X_y(X, y, dtype=np.float64)
        if X_target is None or domain is None:
            raise ValueError("fit needs X_target and domain")
        X_target = check_array(X_target, dtype=np.float64)
        if X_target.shape[1] != X.shape[1]:
            raise ValueError(f"X_target has {X_target.shape[1]} features, X has {X.shape[1]}")
        domain = np.asarray(domain, dtype=object)
        if domain.shape != (len(X),):
            raise ValueError("domain must have one entry per source row")
        is_alpha = np.array([d in _ALPHA_TAGS for d in domain])
        is_beta = np.array([d in _BETA_TAGS for d in domain])
        if not np.all(is_alpha | is_beta):
            raise ValueError("domain entries must be 0/'alpha' or 1/'beta'")

        self.classes_ = np.unique(y)
        alpha_classes = np.unique(y[is_alpha])
        beta_classes = np.unique(y[is_beta])
        if len(alpha_classes) == 0 or len(beta_classes) == 0:
            raise ValueError("both source domains need samples")
        if np.intersect1d(alpha_classes, beta_classes).size:
            raise ValueError("a class appears in both source domains")
        # internal labels: alpha classes first (1..k), then beta (k+1..c)
        order = np.concatenate([alpha_classes, beta_classes])
        self._internal_to_class = np.searchsorted(self.classes_, order)
        lookup = {cls: i + 1 for i, cls in enumerate(order)}
        y_int = np.array([lookup[v] for v in y])

        dataset = MixedSourceDataset(X[is_alpha], y_int[is_alpha], X[is_beta], y_int[is_beta],
                                     X_target, None, n_classes=len(order),
                                     n_alpha_classes=len(alpha_classes))
        self.n_features_in_ = X.shape[1]
        self.networks_, self.metrics_ = train(dataset, self._train_config())
        self.element_weights_ = element_weights(column_sums(self.networks_.head))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "networks_")
        X = check_array(X, dtype=np.float64)
        p_int = predict_proba(self.networks_.G, self.networks_.head, X)
        p = np.empty_like(p_int)
        p[:, self._internal_to_class] = p_int
        return p

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def transform(self, X):
        """Learned features ``G(X)``."""
        check_is_fitted(self, "networks_")
        X = check_array(X, dtype=np.float64)
        return self.networks_.G.forward(X).value.copy()

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform(X)

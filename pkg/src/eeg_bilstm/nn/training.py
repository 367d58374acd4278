"""Training loop and the scikit-learn style classifier wrapper."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted

from .._validation import check_class_counts, check_sequences, stratified_split
from ..errors import ConfigError, EmptyDataset
from .metrics import Metrics, confusion_matrix, metrics_from_confusion
from .model import (
    ModelParams,
    compute_gradients,
    count_parameters,
    cross_entropy,
    forward,
    init_params,
    parse_arch,
)
from .optim import adam_step, clip_by_global_norm, init_adam_state

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "BiLSTMClassifier", "train", "evaluate"]


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    epochs: int = 100
    dropout_rate: float = 0.5
    seed: int = 0
    split: float = 0.8
    hidden_size: int = 128
    dense_units: int = 64
    clip_norm: Optional[float] = 5.0
    standardize: bool = True

    def __post_init__(self):
        if not 0 < self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in (0, 1), got {self.dropout_rate}")
        if not 0 < self.split < 1:
            raise ConfigError(f"split must be in (0, 1), got {self.split}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0 or self.hidden_size < 1 or self.dense_units < 1:
            raise ConfigError("batch_size, hidden_size, dense_units must be >= 1; epochs >= 0")


class BiLSTMClassifier(ClassifierMixin, BaseEstimator):
    """Recurrent sequence classifier trained from scratch with Adam.

    Parameters
    ----------
    arch : str
        One of ``lstm``, ``bilstm``, ``bilstm-attw`` (attention pooling),
        ``bilstm-attg`` (attention-gated cells, mean pooling) or
        ``bilstm-attwg`` (both).
    hidden_size : int
        Units per direction.
    dense_units : int
        Width of the two ReLU layers in the head.
    learning_rate, batch_size, epochs, dropout_rate : see :class:`TrainConfig`.
    clip_norm : float or None
        Global gradient-norm clip; ``None`` disables clipping.
    validation_fraction : float
        Held-out share used for model selection when ``fit`` gets no
        explicit validation set.
    standardize : bool
        Z-score every input feature with training-set statistics.
    random_state : int or None
        Seeds initialisation, shuffling, dropout and the validation split.

    Attributes
    ----------
    classes_ : ndarray
    model_ : ModelParams
        Best-validation parameters, including the input scaling tensors.
    history_ : list of dict
        Per-epoch ``train_loss``, ``batch_loss``, ``val_loss`` and ``val_accuracy``.
    best_epoch_ : int
    """

    def __init__(self, arch="bilstm-attwg", hidden_size=128, dense_units=64,
                 learning_rate=0.001, batch_size=64, epochs=100, dropout_rate=0.5,
                 clip_norm=5.0, validation_fraction=0.2, standardize=True,
                 random_state=0):
        self.arch = arch
        self.hidden_size = hidden_size
        self.dense_units = dense_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout_rate = dropout_rate
        self.clip_norm = clip_norm
        self.validation_fraction = validation_fraction
        self.standardize = standardize
        self.random_state = random_state

    @classmethod
    def from_config(cls, arch, cfg: TrainConfig):
        return cls(arch=arch, hidden_size=cfg.hidden_size, dense_units=cfg.dense_units,
                   learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                   epochs=cfg.epochs, dropout_rate=cfg.dropout_rate, clip_norm=cfg.clip_norm,
                   validation_fraction=1.0 - cfg.split, standardize=cfg.standardize,
                   random_state=cfg.seed)

    # -- fitting ---------------------------------------------------------------

    def _check_params(self, needs_split):
        if not 0 < self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in (0, 1), got {self.dropout_rate}")
        if needs_split and not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("need learning_rate >= 0, batch_size >= 1, epochs >= 0")
        if self.hidden_size < 1 or self.dense_units < 1:
            raise ConfigError("hidden_size and dense_units must be >= 1")

    def fit(self, X, y, X_val=None, y_val=None):
        arch = parse_arch(self.arch)
        self._check_params(X_val is None)
        X = check_sequences(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ConfigError(f"{len(X)} sequences but {len(y)} labels")
        check_classification_targets(y)
        seeds = np.random.SeedSequence(self.random_state).spawn(4)
        init_rng, shuffle_rng, drop_rng, split_rng = (np.random.default_rng(s) for s in seeds)

        if X_val is None:
            check_class_counts(y)
            tr, va = stratified_split(y, 1.0 - self.validation_fraction, split_rng)
            X, y, X_val, y_val = X[tr], y[tr], X[va], y[va]
        else:
            X_val = check_sequences(X_val, X.shape[2])
            y_val = np.asarray(y_val)
            check_class_counts(np.concatenate([y, y_val]))
        self.classes_ = np.unique(np.concatenate([y, y_val]))
        yi = np.searchsorted(self.classes_, y)
        yvi = np.searchsorted(self.classes_, y_val)
        self.n_features_in_ = X.shape[2]

        if self.standardize:
            mean = X.mean(axis=(0, 1))
            scale = X.std(axis=(0, 1))
            scale[scale < 1e-12] = 1.0
        else:
            mean = np.zeros(X.shape[2])
            scale = np.ones(X.shape[2])
        Xs = (X - mean) / scale
        Xvs = (X_val - mean) / scale

        params = init_params(arch, X.shape[2], self.hidden_size, len(self.classes_),
                             self.dense_units, rng=init_rng)
        state = init_adam_state(params)
        n = len(Xs)
        step = 0
        best = None
        best_key = None
        history = []
        for epoch in range(1, self.epochs + 1):
            perm = shuffle_rng.permutation(n)
            batch_losses = []
            for start in range(0, n, self.batch_size):
                idx = perm[start:start + self.batch_size]
                loss, grads = compute_gradients(params, arch, Xs[idx], yi[idx], train_mode=True,
                                                rng=drop_rng, dropout_rate=self.dropout_rate)
                if self.clip_norm is not None:
                    grads, _ = clip_by_global_norm(grads, self.clip_norm)
                step += 1
                params, state = adam_step(params, grads, state, step, self.learning_rate)
                batch_losses.append(loss * len(idx))
            train_loss = cross_entropy(self._proba(params, arch, Xs), yi)
            pv = self._proba(params, arch, Xvs)
            val_loss = cross_entropy(pv, yvi)
            val_acc = float(np.mean(pv.argmax(axis=1) == yvi))
            history.append({"epoch": epoch, "train_loss": train_loss,
                            "batch_loss": float(np.sum(batch_losses) / n),
                            "val_loss": val_loss, "val_accuracy": val_acc})
            key = (-val_acc, val_loss)
            if best_key is None or key < best_key:
                best_key, best = key, ({k: v.copy() for k, v in params.items()}, epoch)
            log.debug("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f",
                      epoch, train_loss, val_loss, val_acc)

        if best is None:
            best = (params, 0)
        self.history_ = history
        self.best_epoch_ = best[1]
        tensors = dict(best[0])
        tensors["input.mean"] = mean
        tensors["input.scale"] = scale
        if np.issubdtype(self.classes_.dtype, np.number):
            tensors["input.classes"] = self.classes_.astype(np.float64)
        else:
            # non-numeric labels are not stored; a reloaded model reports indices
            tensors["input.classes"] = np.arange(len(self.classes_), dtype=np.float64)
        self.model_ = ModelParams(arch.name, tensors,
                                  0 if self.random_state is None else int(self.random_state))
        return self

    @staticmethod
    def _proba(params, arch, X, chunk=512):
        return np.concatenate([forward(params, arch, X[i:i + chunk])
                               for i in range(0, len(X), chunk)])

    # -- inference ---------------------------------------------------------------

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_sequences(X, self.n_features_in_)
        t = self.model_.tensors
        params = {k: v for k, v in t.items() if not k.startswith("input.")}
        if "input.mean" in t:
            X = (X - t["input.mean"]) / t["input.scale"]
        return self._proba(params, self.model_.architecture, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def n_parameters(self):
        check_is_fitted(self, "model_")
        return count_parameters(self.model_.tensors)

    @classmethod
    def from_model(cls, model: ModelParams):
        """Rebuild a fitted classifier from stored parameters (e.g. a checkpoint)."""
        t = model.tensors
        clf = cls(arch=model.arch, hidden_size=t["fwd.W_i"].shape[0],
                  dense_units=t["dense1.W"].shape[0], random_state=model.seed)
        clf.model_ = model
        n_classes = t["out.b"].shape[0]
        clf.classes_ = _restore_classes(t.get("input.classes", np.arange(n_classes, dtype=float)))
        clf.n_features_in_ = t["fwd.W_i"].shape[1]
        clf.history_ = []
        clf.best_epoch_ = None
        return clf


def _restore_classes(c):
    if np.all(c == np.round(c)):
        return c.astype(np.int64)
    return c


def _sequences_and_labels(dataset, labels):
    if labels is None:
        labels = [fs.class_label for fs in dataset]
        if any(lab is None for lab in labels):
            raise ConfigError("every sequence needs a class label")
    return check_sequences(dataset), np.asarray(labels)


def train(dataset, arch="bilstm-attwg", cfg: Optional[TrainConfig] = None, labels=None,
          validation=None):
    """Fit a classifier and report validation metrics at the selected epoch.

    ``dataset`` is a list of FeatureSequence objects (or an array shaped
    (n, time, features) together with ``labels``). ``validation`` is an
    optional ``(sequences, labels)`` pair; without it ``cfg.split`` of the
    data is used for training and the rest for model selection.

    Returns ``(clf, metrics)``; ``clf.model_`` holds the parameters.
    """
    cfg = cfg or TrainConfig()
    X, y = _sequences_and_labels(dataset, labels)
    clf = BiLSTMClassifier.from_config(arch, cfg)
    if validation is not None:
        Xv, yv = _sequences_and_labels(*validation) if isinstance(validation, tuple) \
            else _sequences_and_labels(validation, None)
        clf.fit(X, y, Xv, yv)
    else:
        seeds = np.random.SeedSequence(cfg.seed).spawn(4)
        check_class_counts(y)
        tr, va = stratified_split(y, cfg.split, np.random.default_rng(seeds[3]))
        Xv, yv = X[va], y[va]
        clf.fit(X[tr], y[tr], Xv, yv)
    metrics = evaluate(clf, Xv, yv)
    metrics.loss_history = list(clf.history_)
    return clf, metrics


def evaluate(model, X, y=None) -> Metrics:
    """Accuracy and macro precision/recall/F1 of a fitted classifier."""
    if isinstance(model, ModelParams):
        model = BiLSTMClassifier.from_model(model)
    if y is None:
        X, y = _sequences_and_labels(X, None)
    if len(X) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    X = check_sequences(X)
    y = np.asarray(y)
    proba = model.predict_proba(X)
    classes = model.classes_
    known = np.isin(y, classes)
    if not np.all(known):
        raise ConfigError(f"labels {np.unique(y[~known])} were not seen in training")
    yi = np.searchsorted(classes, y)
    cm = confusion_matrix(yi, proba.argmax(axis=1), len(classes))
    return metrics_from_confusion(cm, cross_entropy(proba, yi))

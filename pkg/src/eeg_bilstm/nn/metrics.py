from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .._io import atomic_open, fmt_float
from ..errors import EmptyDataset


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: np.ndarray
    loss_history: list = field(default_factory=list)
    loss: float = float("nan")

    def as_dict(self):
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "loss": self.loss}

    def to_text(self, extra=None):
        lines = [f"{k}={fmt_float(v)}" for k, v in self.as_dict().items()]
        lines.append("confusion=" + ";".join(
            ",".join(str(int(v)) for v in row) for row in self.confusion))
        for k, v in (extra or {}).items():
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    def write(self, path, extra=None):
        with atomic_open(path) as fh:
            fh.write(self.to_text(extra))

    def write_loss_history(self, path):
        cols = ["epoch", "train_loss", "batch_loss", "val_loss", "val_accuracy"]
        with atomic_open(path) as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.loss_history:
                fh.write(",".join(
                    str(row[c]) if c == "epoch" else fmt_float(row[c]) for c in cols) + "\n")


def confusion_matrix(y_true, y_pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def metrics_from_confusion(cm, loss=float("nan"), history=None) -> Metrics:
    """Accuracy and macro-averaged precision/recall/F1 from a confusion matrix.

    Rows are true classes, columns predictions. Classes never predicted get
    precision 0; F1 is averaged per class.
    """
    cm = np.asarray(cm)
    n = cm.sum()
    if n == 0:
        raise EmptyDataset("no samples to score")
    tp = np.diag(cm).astype(float)
    pred = cm.sum(axis=0)
    true = cm.sum(axis=1)
    prec = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    rec = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    return Metrics(float(tp.sum() / n), float(prec.mean()), float(rec.mean()),
                   float(f1.mean()), cm, list(history or []), float(loss))

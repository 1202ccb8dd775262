"""MAE/MSE metrics, the old/new-task evaluation protocol, and relative-change rows.

Metrics are computed on normalized values and averaged over all samples and
all horizon steps. Relative changes use the sign convention where a positive
percentage means the method improved on the raw (untuned) model.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricPair",
    "ComparisonRow",
    "mae",
    "mse",
    "metric_pair",
    "evaluate_model",
    "relative_change",
    "build_comparison_row",
]


@dataclass(frozen=True)
class MetricPair:
    mae: float
    mse: float
    n_samples: int

    def to_dict(self):
        return {"mae": self.mae, "mse": self.mse, "n_samples": self.n_samples}


@dataclass(frozen=True)
class ComparisonRow:
    """One method's metrics plus its percent change against the raw row."""

    method: str
    old: MetricPair
    new: MetricPair
    old_mae_change: float
    old_mse_change: float
    new_mae_change: float
    new_mse_change: float

    def to_dict(self):
        return {
            "method": self.method,
            "old": self.old.to_dict(),
            "new": self.new.to_dict(),
            "old_mae_change_pct": self.old_mae_change,
            "old_mse_change_pct": self.old_mse_change,
            "new_mae_change_pct": self.new_mae_change,
            "new_mse_change_pct": self.new_mse_change,
        }


def _residuals(preds, labels) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("empty prediction set")
    return preds - labels


def mae(preds, labels) -> float:
    """Mean absolute error over all samples and horizon steps."""
    return float(np.abs(_residuals(preds, labels)).mean())


def mse(preds, labels) -> float:
    """Mean squared error over all samples and horizon steps."""
    return float((_residuals(preds, labels) ** 2).mean())


def metric_pair(preds, labels) -> MetricPair:
    r = _residuals(preds, labels)
    return MetricPair(mae=float(np.abs(r).mean()), mse=float((r ** 2).mean()),
                      n_samples=int(np.asarray(preds).shape[0]))


def evaluate_model(model, old_tests, new_test):
    """Evaluate on every old-task test set and the new-task test set.

    Old-task metrics are the unweighted mean of the per-dataset metrics,
    regardless of dataset sizes.

    Returns:
        (old MetricPair averaged across datasets, new MetricPair)
    """
    if not old_tests:
        raise ValueError("need at least one old-task test set")
    pairs = [metric_pair(model.forward_batch(ds.inputs), ds.labels)
             for ds in old_tests]
    old = MetricPair(
        mae=float(np.mean([p.mae for p in pairs])),
        mse=float(np.mean([p.mse for p in pairs])),
        n_samples=int(sum(p.n_samples for p in pairs)),
    )
    new = metric_pair(model.forward_batch(new_test.inputs), new_test.labels)
    return old, new


def relative_change(raw: float, method: float) -> float:
    """Percent change of `method` against `raw`: (raw - method) / raw * 100.

    Positive means improvement; rounded to 3 decimals.
    """
    if raw <= 0:
        raise ValueError(f"raw value must be positive, got {raw}")
    return round((raw - method) / raw * 100.0, 3)


def build_comparison_row(method: str, old: MetricPair, new: MetricPair,
                         raw_old: MetricPair, raw_new: MetricPair) -> ComparisonRow:
    return ComparisonRow(
        method=method,
        old=old,
        new=new,
        old_mae_change=relative_change(raw_old.mae, old.mae),
        old_mse_change=relative_change(raw_old.mse, old.mse),
        new_mae_change=relative_change(raw_new.mae, new.mae),
        new_mse_change=relative_change(raw_new.mse, new.mse),
    )

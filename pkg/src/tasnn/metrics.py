"""Evaluation metrics: episode accuracy, ROC/AUC, pair confusion, PCA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def accuracy(correct, total):
    """Percentage of correct predictions, ``100 * Q / m``."""
    if total < 1:
        raise ValueError("accuracy needs at least one prediction")
    if not 0 <= correct <= total:
        raise ValueError("correct must lie in [0, total]")
    return 100.0 * correct / total


def roc_curve(scores, labels):
    """ROC points from a threshold sweep over the distinct scores.

    Returns ``(fpr, tpr, fp_counts, tp_counts)``, starting at (0, 0) and
    ending at (1, 1). Higher scores mean "positive".
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative labels")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of each run of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.r_[0, np.cumsum(y)[ends]]
    fp = np.r_[0, np.cumsum(1 - y)[ends]]
    return fp / n_neg, tp / n_pos, fp, tp


def auc_roc(scores, labels):
    """Area under the ROC curve by the trapezoidal rule.

    The area is accumulated in integer counts, so ties get exactly half
    credit and the result is bit-identical to the pairwise concordance
    statistic. Returns ``(auc, [(fpr, tpr), ...])``.
    """
    fpr, tpr, fp, tp = roc_curve(scores, labels)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    n_pos, n_neg = int(tp[-1]), int(fp[-1])
    auc = twice_area / (2 * n_pos * n_neg)
    return auc, [(float(a), float(b)) for a, b in zip(fpr, tpr)]


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def add(self, predicted_same, actually_same):
        if actually_same:
            if predicted_same:
                self.tp += 1
            else:
                self.fn += 1
        elif predicted_same:
            self.fp += 1
        else:
            self.tn += 1

    def merge(self, other):
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass
class PCAResult:
    coords: np.ndarray       # (n, 2)
    components: np.ndarray   # (2, d), rows are unit principal directions
    eigenvalues: np.ndarray  # all covariance eigenvalues, descending
    mean: np.ndarray


def pca_projection(features, n_components=2):
    """Project mean-centred ``features`` (n, d) onto the top principal components.

    Each component's sign is fixed so its largest-magnitude loading is
    positive.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("PCA needs at least 2 samples and 2 feature dimensions")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / x.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[0] <= 1e-12 * max(1.0, np.abs(x).max() ** 2):
        raise ValueError("degenerate input: all samples identical")
    comps = evecs[:, :n_components].T.copy()
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1.0
    return PCAResult(xc @ comps.T, comps, np.clip(evals, 0.0, None), mean)

"""ACC, macro F1 and one-vs-rest macro AUC, all as fractions in [0, 1]."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def binary_auc(scores, positive) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("binary AUC needs both positive and negative samples")
    ranks = rankdata(scores)  # average ranks for ties
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_ovr_macro(scores, labels, return_per_class: bool = False):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ValueError("scores must be (N, C) with one label per row")
    if scores.shape[0] < 2:
        raise ValueError("AUC needs at least 2 samples")
    if np.any(np.abs(scores.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("score rows must sum to 1")
    present = np.unique(labels)
    if present.size < 2:
        raise ValueError("AUC needs at least 2 classes present in labels")
    per_class = {int(c): binary_auc(scores[:, c], labels == c) for c in present}
    macro = float(np.mean(list(per_class.values())))
    return (macro, per_class) if return_per_class else macro


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    if labels.size == 0:
        raise ValueError("no samples")
    return float((preds == labels).mean())


def per_class_f1(preds, labels) -> dict:
    """F1 per class present in ``labels``; 0 when precision + recall is 0."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    out = {}
    for c in np.unique(labels):
        tp = np.sum((preds == c) & (labels == c))
        fp = np.sum((preds == c) & (labels != c))
        fn = np.sum((preds != c) & (labels == c))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        out[int(c)] = float(2 * p * r / (p + r)) if p + r else 0.0
    return out


def macro_f1(preds, labels) -> float:
    if np.asarray(labels).size == 0:
        raise ValueError("no samples")
    return float(np.mean(list(per_class_f1(preds, labels).values())))

"""Hybrid supervised/contrastive loss with analytic gradients.

All functions return ``(loss, grad)`` pairs in float64. The supervised part is
a sample-weighted cross-entropy on logits; the contrastive part is an NT-Xent
instance-discrimination loss whose anchors are the strongly augmented rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-4


@dataclass(frozen=True)
class AlphaSchedule:
    total_epochs: int

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")


def alpha_at(schedule: AlphaSchedule, epoch: int) -> float:
    """Contrastive weight: 1 at the first epoch, linearly down to 0 at the last."""
    if not 0 <= epoch < schedule.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    if schedule.total_epochs == 1:
        return 0.0
    return 1.0 - epoch / (schedule.total_epochs - 1)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels, weights=None):
    """Weighted-mean cross-entropy and its gradient w.r.t. ``logits``.

    ``loss = sum_i w_i * -log softmax(z_i)[y_i] / sum_i w_i``
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.intp)
    n, c = z.shape
    if y.shape != (n,):
        raise ValueError("labels must have one entry per logit row")
    if np.any(y < 0) or np.any(y >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("sample weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("sample weights sum to zero")
    logp = log_softmax(z)
    rows = np.arange(n)
    loss = float(-(w * logp[rows, y]).sum() / total)
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    grad *= (w / total)[:, None]
    return loss, grad


def _check_unit_rows(x: np.ndarray, name: str):
    norms = np.linalg.norm(x, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise ValueError(f"{name} rows must be unit norm (max deviation {np.abs(norms - 1).max():.2e})")


def ntxent(strong, weak, tau: float, symmetric: bool = False, weights=None):
    """Instance-discrimination loss over a two-view batch.

    Row ``i`` of ``strong`` is an anchor whose positive is row ``i`` of
    ``weak``; its denominator covers every other row of both views. With
    ``symmetric=True`` the weak rows act as anchors too. Optional per-pair
    ``weights`` turn the anchor mean into a weighted mean.

    Returns ``(loss, grad_strong, grad_weak)``.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    fs = np.asarray(strong, dtype=np.float64)
    fw = np.asarray(weak, dtype=np.float64)
    if fs.ndim != 2 or fs.shape != fw.shape or fs.shape[0] < 1:
        raise ValueError("strong and weak views must be matching non-empty 2-D arrays")
    _check_unit_rows(fs, "strong")
    _check_unit_rows(fw, "weak")
    n = fs.shape[0]
    feats = np.concatenate([fs, fw], axis=0)
    anchors = np.arange(2 * n if symmetric else n)
    positives = (anchors + n) % (2 * n)

    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if symmetric:
        w = np.concatenate([w, w])
    w = w / w.sum()

    logits = feats[anchors] @ feats.T / tau
    logits[anchors, anchors] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    denom = expl.sum(axis=1)
    pos = logits[anchors, positives]
    losses = np.log(denom) - pos
    loss = float((w * losses).sum())

    # d loss_a / d logit_ab = P_ab - [b == positive(a)]
    g = expl / denom[:, None]
    g[anchors, positives] -= 1.0
    g *= (w / tau)[:, None]
    grad = g.T @ feats[anchors]
    grad[anchors] += g @ feats
    return loss, grad[:n], grad[n:]


def dahloss_combine(sup, scon, alpha: float):
    """Blend ``(loss, grads...)`` tuples as ``(1 - alpha) * sup + alpha * scon``.

    Gradients are scaled but not summed: the supervised gradients flow into
    the classifier head and the contrastive ones into the projection head.
    Returns ``(total, scaled_sup_grads, scaled_scon_grads)``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    sup_loss, *sup_grads = sup
    scon_loss, *scon_grads = scon
    total = (1.0 - alpha) * sup_loss + alpha * scon_loss
    return (
        total,
        tuple((1.0 - alpha) * g for g in sup_grads),
        tuple(alpha * g for g in scon_grads),
    )

"""Domain-class-aware re-balancing weights.

For every (domain, class) pair with occurrence probability ``q``, the weight is

    w = sum over all pairs (q') ** beta  /  q ** beta

``beta = 0`` gives equal weights, ``beta = 1`` gives inverse-frequency weights.
Pairs with no samples get weight 0 and stay out of the numerator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DomainClassCounts:
    domains: tuple
    n_classes: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.domains), self.n_classes):
            raise ValueError(
                f"counts shape {counts.shape} != ({len(self.domains)}, {self.n_classes})"
            )
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "domains", tuple(self.domains))
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_labels(cls, domains: Sequence[str], labels: Sequence[int], n_classes: int,
                    domain_order: Sequence[str] = None) -> "DomainClassCounts":
        order = list(domain_order) if domain_order is not None else sorted(set(domains))
        index = {d: k for k, d in enumerate(order)}
        counts = np.zeros((len(order), n_classes), dtype=np.int64)
        for d, y in zip(domains, labels):
            counts[index[d], int(y)] += 1
        return cls(tuple(order), n_classes, counts)


@dataclass(frozen=True)
class DcrTable:
    domains: tuple
    beta: float
    q: np.ndarray
    w: np.ndarray

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "domains": list(self.domains),
            "q": self.q.tolist(),
            "w": self.w.tolist(),
        }


def occurrence_probs(counts: DomainClassCounts, conditional: bool = False) -> np.ndarray:
    """Joint ``n[d, c] / total`` (default) or per-domain ``n[d, c] / n[d]``."""
    if counts.total <= 0:
        raise ValueError("domain-class counts are empty")
    c = counts.counts.astype(np.float64)
    if conditional:
        per_domain = c.sum(axis=1, keepdims=True)
        return np.divide(c, per_domain, out=np.zeros_like(c), where=per_domain > 0)
    return c / c.sum()


def dcr_weights(q, beta: float, domains: Sequence[str] = None) -> DcrTable:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or np.any(q < 0) or not np.any(q > 0):
        raise ValueError("q must be a non-negative 2-D table with some mass")
    present = q > 0
    powered = np.where(present, np.power(np.where(present, q, 1.0), beta), 0.0)
    numerator = powered.sum()
    w = np.divide(numerator, powered, out=np.zeros_like(q), where=present)
    if domains is None:
        domains = tuple(str(k) for k in range(q.shape[0]))
    return DcrTable(tuple(domains), float(beta), q, w)


def build_table(counts: DomainClassCounts, beta: float, conditional: bool = False) -> DcrTable:
    return dcr_weights(occurrence_probs(counts, conditional), beta, counts.domains)


def sample_weight(table: DcrTable, domain, cls: int) -> float:
    """Weight of one sample; ``domain`` is a domain id or its row index."""
    if isinstance(domain, (int, np.integer)):
        d = int(domain)
        if not 0 <= d < len(table.domains):
            raise KeyError(f"domain index {domain} out of range")
    else:
        try:
            d = table.domains.index(domain)
        except ValueError:
            raise KeyError(f"unknown domain {domain!r}") from None
    if not 0 <= cls < table.w.shape[1]:
        raise IndexError(f"class index {cls} out of range [0, {table.w.shape[1]})")
    return float(table.w[d, cls])

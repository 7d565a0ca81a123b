"""Per-domain colour statistics and grade histograms of a manifest."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from ..imagecore import ImageError, load_image
from .manifest import domains_of

CHANNELS = ("R", "G", "B")


@dataclass
class DomainStats:
    domain: str
    n_images: int
    mean: list  # per channel, FOV pixels only
    std: list
    histogram: list  # count per grade


class StatsError(ImageError):
    pass


def domain_stats(records, root: str, n_classes: int = 5) -> list:
    """Channel mean/std over FOV pixels and class counts, one entry per domain.

    Statistics pool every FOV pixel of the domain (not a mean of per-image
    means), so images of different sizes weigh by pixel count.
    """
    out = []
    for dom in domains_of(records):
        recs = [r for r in records if r.domain == dom]
        total = np.zeros(3)
        total_sq = np.zeros(3)
        count = 0
        hist = [0] * n_classes
        for r in recs:
            path = os.path.join(root, r.path)
            try:
                img = load_image(path)
            except (ImageError, OSError) as exc:
                raise StatsError(f"cannot read image {path}: {exc}") from exc
            px = img.data[img.mask()]
            total += px.sum(axis=0)
            total_sq += (px * px).sum(axis=0)
            count += len(px)
            if not 0 <= r.grade < n_classes:
                raise StatsError(f"{path}: grade {r.grade} outside 0..{n_classes - 1}")
            hist[r.grade] += 1
        mean = total / count
        var = np.maximum(total_sq / count - mean * mean, 0.0)
        out.append(DomainStats(dom, len(recs), mean.tolist(), np.sqrt(var).tolist(), hist))
    return out


def format_stats(stats, digits: int = 3) -> str:
    n_classes = len(stats[0].histogram) if stats else 0
    name_w = max([len("domain")] + [len(s.domain) for s in stats])
    head = ["domain".ljust(name_w), "n".rjust(5)]
    head += [f"mean_{c}".rjust(digits + 4) for c in CHANNELS]
    head += [f"std_{c}".rjust(digits + 4) for c in CHANNELS]
    head += [f"g{k}".rjust(5) for k in range(n_classes)]
    lines = ["  ".join(head)]
    for s in stats:
        row = [s.domain.ljust(name_w), str(s.n_images).rjust(5)]
        row += [f"{v:.{digits}f}".rjust(digits + 4) for v in s.mean]
        row += [f"{v:.{digits}f}".rjust(digits + 4) for v in s.std]
        row += [str(c).rjust(5) for c in s.histogram]
        lines.append("  ".join(row))
    return "\n".join(lines)


def stats_to_json(stats) -> str:
    return json.dumps([asdict(s) for s in stats], indent=2, sort_keys=True)

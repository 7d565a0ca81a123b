"""CSV dataset manifests (``path,grade,domain``)."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

HEADER = ("path", "grade", "domain")
N_GRADES = 5


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    grade: int
    domain: str


def parse_manifest(path) -> list:
    """Read a manifest; ``path`` entries stay relative to the manifest file."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    header = tuple(cell.strip().lower() for cell in rows[0])
    if header != HEADER:
        raise ManifestError(f"{path}:1: expected header 'path,grade,domain', got {','.join(rows[0])[:60]!r}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ManifestError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        rel, grade, domain = (cell.strip() for cell in row)
        try:
            g = int(grade)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: grade {grade!r} is not an integer") from None
        if not 0 <= g < N_GRADES:
            raise ManifestError(f"{path}:{lineno}: grade {g} outside 0..{N_GRADES - 1}")
        if not rel:
            raise ManifestError(f"{path}:{lineno}: empty path")
        if not domain:
            raise ManifestError(f"{path}:{lineno}: empty domain")
        records.append(ManifestRecord(rel, g, domain))
    if not records:
        raise ManifestError(f"{path}: manifest has a header but no records")
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in records:
            writer.writerow((r.path, r.grade, r.domain))


def domains_of(records) -> list:
    """Domain ids in first-appearance order."""
    seen = {}
    for r in records:
        seen.setdefault(r.domain, None)
    return list(seen)

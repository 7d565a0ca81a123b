"""Synthetic multi-domain fundus-like images.

Each image is a circular retina disc with an optic disc, curved vessel
strokes and grade-dependent lesion dots. A domain adds a color cast, an
illumination level, a contrast level, a class imbalance and rates of
halo / blur / spot degradations.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..fundusaug import blur, render_halo, render_spot
from ..imagecore import ImageRgb, inscribed_circle_mask, save_image
from ..rng import make_rng
from .manifest import ManifestRecord, write_manifest

RETINA = np.array([0.78, 0.38, 0.18])
OPTIC_DISC = np.array([0.96, 0.86, 0.58])
VESSEL = np.array([0.45, 0.10, 0.06])
HEMORRHAGE = np.array([0.30, 0.04, 0.03])
EXUDATE = np.array([0.97, 0.88, 0.35])


@dataclass
class SynthDomainSpec:
    name: str
    class_counts: tuple = (40, 40, 40, 40, 40)
    cast: tuple = (0.0, 0.0, 0.0)
    illumination: float = 1.0
    contrast: float = 1.0
    halo_rate: float = 0.0
    blur_rate: float = 0.0
    spot_rate: float = 0.0
    # expected lesion count per grade, and mean lesion radius in pixels at 64x64
    lesion_density: tuple = (0.0, 4.0, 10.0, 20.0, 34.0)
    lesion_radius: float = 1.3
    size: int = 64

    def __post_init__(self):
        self.class_counts = tuple(int(c) for c in self.class_counts)
        self.cast = tuple(float(c) for c in self.cast)
        self.lesion_density = tuple(float(x) for x in self.lesion_density)
        if any(c < 0 for c in self.class_counts):
            raise ValueError(f"{self.name}: class counts must be >= 0")
        if sum(1 for c in self.class_counts if c > 0) < 2:
            raise ValueError(f"{self.name}: at least 2 classes need a nonzero count")
        if len(self.lesion_density) != len(self.class_counts):
            raise ValueError(f"{self.name}: lesion_density needs one entry per class")


def default_specs(images_per_domain: int = 200, size: int = 64) -> list:
    """Four domains: a neutral one, a warm/bright one, a dark green-cast one
    with heavy class imbalance, and a heavily degraded blue-cast one."""
    def counts(fracs):
        c = [int(round(f * images_per_domain)) for f in fracs]
        c[0] += images_per_domain - sum(c)
        return tuple(c)

    mild = counts((0.30, 0.20, 0.20, 0.175, 0.125))
    heavy = counts((0.55, 0.20, 0.125, 0.075, 0.05))
    return [
        SynthDomainSpec("alpha", mild, cast=(0.0, 0.0, 0.0), illumination=1.0, size=size),
        SynthDomainSpec("beta", mild, cast=(0.08, 0.04, -0.04), illumination=1.12, contrast=0.85, size=size),
        SynthDomainSpec("gamma", heavy, cast=(-0.06, 0.05, 0.02), illumination=0.82, contrast=1.15, size=size),
        SynthDomainSpec("delta", mild, cast=(-0.02, 0.0, 0.07), illumination=0.95,
                        halo_rate=0.6, blur_rate=0.6, spot_rate=0.5, size=size),
    ]


def specs_to_json(specs) -> str:
    return json.dumps([asdict(s) for s in specs], indent=2)


def specs_from_json(text: str) -> list:
    return [SynthDomainSpec(**d) for d in json.loads(text)]


def _soft_disk(yy, xx, cx, cy, r, edge=0.8):
    d = np.hypot(xx - cx, yy - cy)
    return np.clip((r + edge - d) / edge, 0.0, 1.0)


def _blend(data, alpha, color):
    a = alpha[..., None]
    return data * (1.0 - a) + a * color


def render_fundus(grade: int, spec: SynthDomainSpec, rng: np.random.Generator):
    """One synthetic image; returns ``(ImageRgb, lesion_mask)``."""
    s = spec.size
    mask = inscribed_circle_mask(s, s)
    yy = np.arange(s, dtype=np.float64)[:, None] + 0.5
    xx = np.arange(s, dtype=np.float64)[None, :] + 0.5
    c = s / 2.0
    R = s / 2.0
    d = np.hypot(xx - c, yy - c) / R

    base = RETINA * rng.uniform(0.92, 1.08, 3)
    data = base * (1.0 - 0.35 * d[..., None] ** 2)
    data = np.broadcast_to(data, (s, s, 3)).copy()

    # optic disc left or right of center
    side = -1.0 if rng.uniform() < 0.5 else 1.0
    odx = c + side * R * rng.uniform(0.28, 0.38)
    ody = c + R * rng.uniform(-0.08, 0.08)
    data = _blend(data, _soft_disk(yy, xx, odx, ody, R * 0.12, edge=1.5), OPTIC_DISC)

    # vessels: arcs leaving the optic disc
    for _ in range(int(rng.integers(4, 7))):
        theta0 = rng.uniform(0, 2 * math.pi)
        bend = rng.uniform(-1.2, 1.2)
        t = np.linspace(0.0, 1.0, 48)
        radius = R * (0.1 + 0.85 * t)
        ang = theta0 + bend * t
        px = odx + radius * np.cos(ang)
        py = ody + radius * np.sin(ang)
        dist = np.min(np.hypot(xx[..., None] - px, yy[..., None] - py), axis=-1)
        width = rng.uniform(0.5, 0.9)
        data = _blend(data, 0.8 * np.clip(width + 0.6 - dist, 0.0, 1.0), VESSEL)

    # lesions
    lesion = np.zeros((s, s), dtype=bool)
    n_lesions = int(rng.poisson(spec.lesion_density[grade])) if spec.lesion_density[grade] > 0 else 0
    scale = s / 64.0
    yellow_frac = min(0.15 * grade, 0.6)
    for _ in range(n_lesions):
        rr = R * 0.85 * math.sqrt(rng.uniform())
        th = rng.uniform(0, 2 * math.pi)
        lx, ly = c + rr * math.cos(th), c + rr * math.sin(th)
        r = scale * spec.lesion_radius * rng.uniform(0.7, 1.3) * (1.0 + 0.08 * grade)
        alpha = _soft_disk(yy, xx, lx, ly, r)
        color = EXUDATE if rng.uniform() < yellow_frac else HEMORRHAGE
        data = _blend(data, alpha, color)
        lesion |= alpha >= 0.5

    # domain style
    mean = data[mask].mean(axis=0)
    data = mean + spec.contrast * (data - mean)
    data = data * spec.illumination + np.asarray(spec.cast)
    data = np.where(mask[..., None], np.clip(data, 0.0, 1.0), 0.0)
    img = ImageRgb(data, mask)

    if rng.uniform() < spec.halo_rate:
        cx = c + rng.uniform(-R, R) / 3.0
        cy = c + rng.uniform(-R, R) / 3.0
        geom = {"cx": cx, "cy": cy, "radius": R * rng.uniform(0.6, 0.95), "width": R * rng.uniform(0.2, 0.45)}
        img = render_halo(img, rng.uniform(0.15, 0.4), geom)
    if rng.uniform() < spec.spot_rate:
        spots = []
        for _ in range(int(rng.integers(1, 4))):
            rr = R * 0.8 * math.sqrt(rng.uniform())
            th = rng.uniform(0, 2 * math.pi)
            lvl = rng.uniform(0.85, 1.0)
            spots.append({"cx": c + rr * math.cos(th), "cy": c + rr * math.sin(th),
                          "radius": s * rng.uniform(0.02, 0.05), "color": [lvl, lvl, 0.9 * lvl]})
        img = render_spot(img, rng.uniform(0.4, 0.8), {"spots": spots})
    if rng.uniform() < spec.blur_rate:
        img = blur(img, rng.uniform(0.6, 1.2))
    img = ImageRgb(np.where(mask[..., None], img.data, 0.0), mask)
    return img, lesion


@dataclass
class SynthResult:
    records: list
    lesion_pixels: list = field(default_factory=list)
    manifest_path: str = ""


def synth_generate(specs, seed: int, out_dir, manifest_name: str = "manifest.csv") -> SynthResult:
    """Write images plus ``manifest.csv`` and ``synth_meta.jsonl`` under ``out_dir``."""
    out_dir = os.fspath(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise PermissionError(f"output directory not writable: {out_dir}: {exc}") from exc

    records, lesion_pixels, meta = [], [], []
    for di, spec in enumerate(specs):
        os.makedirs(os.path.join(out_dir, spec.name), exist_ok=True)
        k = 0
        for grade, count in enumerate(spec.class_counts):
            for _ in range(count):
                rng = make_rng(seed, "synth", di, k)
                img, lesion = render_fundus(grade, spec, rng)
                rel = f"{spec.name}/{spec.name}_{k:04d}.png"
                save_image(img, os.path.join(out_dir, rel))
                records.append(ManifestRecord(rel, grade, spec.name))
                n_les = int(lesion.sum())
                lesion_pixels.append(n_les)
                meta.append({"path": rel, "grade": grade, "domain": spec.name, "lesion_pixels": n_les})
                k += 1
    manifest_path = os.path.join(out_dir, manifest_name)
    write_manifest(manifest_path, records)
    with open(os.path.join(out_dir, "synth_meta.jsonl"), "w") as fh:
        for row in meta:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "synth_spec.json"), "w") as fh:
        fh.write(json.dumps({"seed": seed, "domains": [asdict(s) for s in specs]}, indent=2))
    return SynthResult(records, lesion_pixels, manifest_path)

"""FundusAug: visual and degradation transforms composed with per-transform
probabilities, plus the weak flip/crop view.

Each transform has a deterministic renderer (image, intensity, geometry) and,
for the degradations, a geometry sampler. ``fundus_aug`` samples an
:class:`AugPlan` and renders it, so any plan can be replayed exactly with
:func:`apply_plan`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .imagecore import ImageRgb, fov_geometry, resize_array, rgb_to_hsv, hsv_to_rgb

VISUAL = ("brightness", "contrast", "saturation", "hue", "sharpness")
DEGRADATION = ("halo", "hole", "spot", "blur")
TRANSFORMS = VISUAL + DEGRADATION

# inputs outside these ranges are clamped with a warning
VALID_RANGES = {
    "brightness": (-0.5, 0.5),
    "contrast": (0.5, 1.5),
    "saturation": (0.5, 1.5),
    "hue": (-18.0, 18.0),
    "sharpness": (0.5, 1.5),
    "halo": (0.0, 1.0),
    "hole": (0.0, 1.0),
    "spot": (0.0, 1.0),
    "blur": (0.1, 2.0),
}
DEFAULT_RANGES = dict(VALID_RANGES)
IDENTITY = {
    "brightness": 0.0,
    "contrast": 1.0,
    "saturation": 1.0,
    "hue": 0.0,
    "sharpness": 1.0,
    "halo": 0.0,
    "hole": 0.0,
    "spot": 0.0,
    "blur": 0.1,
}
MAX_GEOMETRY_TRIES = 8
LUMA = np.array([0.299, 0.587, 0.114])


# --------------------------------------------------------------------------
# configuration and plans


@dataclass
class TransformSpec:
    enabled: bool = True
    probability: float = 0.5
    low: float = 0.0
    high: float = 0.0


@dataclass
class AugConfig:
    transforms: dict = field(default_factory=dict)
    order: tuple = TRANSFORMS

    def __post_init__(self):
        for name in TRANSFORMS:
            if name not in self.transforms:
                lo, hi = DEFAULT_RANGES[name]
                self.transforms[name] = TransformSpec(True, 0.5, lo, hi)
        self.order = tuple(self.order)
        self.validate()

    def validate(self):
        unknown = set(self.transforms) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown transforms: {sorted(unknown)}")
        if len(set(self.order)) != len(self.order):
            raise ValueError("composition order repeats a transform")
        for name in self.order:
            if name not in TRANSFORMS:
                raise ValueError(f"unknown transform in order: {name}")
        for name, spec in self.transforms.items():
            if not 0.0 <= spec.probability <= 1.0:
                raise ValueError(f"{name}: probability {spec.probability} outside [0, 1]")
            if spec.low > spec.high:
                raise ValueError(f"{name}: low {spec.low} > high {spec.high}")

    @classmethod
    def default(cls, visual: bool = True, degradation: bool = True, probability: float = 0.5):
        transforms = {}
        for name in TRANSFORMS:
            lo, hi = DEFAULT_RANGES[name]
            on = visual if name in VISUAL else degradation
            transforms[name] = TransformSpec(on, probability, lo, hi)
        return cls(transforms)

    @classmethod
    def identity(cls, probability: float = 1.0):
        """All transforms on, every range collapsed onto its identity intensity."""
        return cls({n: TransformSpec(True, probability, IDENTITY[n], IDENTITY[n]) for n in TRANSFORMS})

    def to_mapping(self) -> dict:
        """Flat ``name.field`` mapping (the config-file layout)."""
        out = {}
        for name in TRANSFORMS:
            spec = self.transforms[name]
            out[f"{name}.enabled"] = spec.enabled
            out[f"{name}.probability"] = spec.probability
            out[f"{name}.low"] = spec.low
            out[f"{name}.high"] = spec.high
        out["order"] = list(self.order)
        return out

    @classmethod
    def from_mapping(cls, mapping: dict, base: Optional["AugConfig"] = None) -> "AugConfig":
        cfg = base if base is not None else cls.default()
        transforms = {n: TransformSpec(**asdict(s)) for n, s in cfg.transforms.items()}
        order = cfg.order
        for key, value in mapping.items():
            if key == "order":
                order = tuple(value)
                continue
            name, _, attr = key.partition(".")
            if name not in TRANSFORMS or attr not in ("enabled", "probability", "low", "high"):
                raise KeyError(key)
            if attr == "enabled":
                value = _as_bool(value)
            else:
                value = float(value)
            setattr(transforms[name], attr, value)
        return cls(transforms, order)


def _as_bool(value) -> bool:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return bool(value)


@dataclass
class TransformDraw:
    name: str
    applied: bool
    m: Optional[float] = None
    geometry: Optional[dict] = None


@dataclass
class AugPlan:
    steps: list

    def applied(self) -> list:
        return [s.name for s in self.steps if s.applied]

    def to_json(self) -> str:
        return json.dumps({"steps": [asdict(s) for s in self.steps]}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AugPlan":
        obj = json.loads(text)
        return cls([TransformDraw(**s) for s in obj["steps"]])


# --------------------------------------------------------------------------
# helpers


def _check_m(name: str, m: float) -> float:
    lo, hi = VALID_RANGES[name]
    if m < lo or m > hi:
        warnings.warn(f"{name} intensity {m} clamped to [{lo}, {hi}]", stacklevel=3)
        m = min(max(m, lo), hi)
    return float(m)


def _grid(h: int, w: int):
    yy = np.arange(h, dtype=np.float64)[:, None] + 0.5
    xx = np.arange(w, dtype=np.float64)[None, :] + 0.5
    return yy, xx


def _masked(img: ImageRgb, new: np.ndarray) -> ImageRgb:
    # degradations touch FOV pixels only
    mask = img.mask()[..., None]
    return img.with_data(np.where(mask, new, img.data))


def _pad_shift_sum(data: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    # centered 1-D correlation with edge replication
    return ndimage.correlate1d(data, weights, axis=axis, mode="nearest")


def box_blur3(data: np.ndarray) -> np.ndarray:
    """3x3 mean filter with edge replication."""
    ones = np.full(3, 1.0 / 3.0)
    return _pad_shift_sum(_pad_shift_sum(data, ones, 0), ones, 1)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


# --------------------------------------------------------------------------
# visual transforms


def adjust_brightness(img: ImageRgb, m: float) -> ImageRgb:
    m = _check_m("brightness", m)
    return img.with_data(img.data + m)


def adjust_contrast(img: ImageRgb, m: float) -> ImageRgb:
    m = _check_m("contrast", m)
    luma = img.data @ LUMA
    mask = img.mask()
    mu = luma[mask].mean() if mask.any() else luma.mean()
    return img.with_data(mu + m * (img.data - mu))


def adjust_saturation(img: ImageRgb, m: float) -> ImageRgb:
    """Scale HSV saturation by ``m`` (clamped to 1), keeping hue and value.

    Hexcone channels satisfy ``c = v - v*s*f(h)``, so scaling s is the same
    as pulling each channel toward v by ``s'/s``; no round trip is needed.
    """
    m = _check_m("saturation", m)
    data = img.data
    r, g, b = data[..., 0:1], data[..., 1:2], data[..., 2:3]
    v = np.maximum(np.maximum(r, g), b)
    delta = v - np.minimum(np.minimum(r, g), b)
    ratio = np.minimum(m, np.divide(v, delta, out=np.full_like(v, np.inf), where=delta > 0))
    return img.with_data(v - ratio * (v - data))


def adjust_hue(img: ImageRgb, m: float) -> ImageRgb:
    """Rotate hue by ``m`` degrees."""
    m = _check_m("hue", m)
    hsv = rgb_to_hsv(img.data)
    hsv[..., 0] = np.mod(hsv[..., 0] + m, 360.0)
    return img.with_data(hsv_to_rgb(hsv))


def adjust_sharpness(img: ImageRgb, m: float) -> ImageRgb:
    m = _check_m("sharpness", m)
    return img.with_data((1.0 - m) * box_blur3(img.data) + m * img.data)


# --------------------------------------------------------------------------
# degradations: geometry samplers and renderers


def _sample_point_in_fov(mask: np.ndarray, rng: np.random.Generator):
    h, w = mask.shape
    for _ in range(MAX_GEOMETRY_TRIES):
        x = rng.uniform(0.0, w)
        y = rng.uniform(0.0, h)
        if mask[min(int(y), h - 1), min(int(x), w - 1)]:
            return x, y
    return None


def sample_halo_geometry(mask: np.ndarray, rng: np.random.Generator) -> Optional[dict]:
    cx, cy, r_fov = fov_geometry(mask)
    if r_fov <= 0:
        return None
    theta = rng.uniform(0.0, 2.0 * math.pi)
    rho = (r_fov / 3.0) * math.sqrt(rng.uniform())
    return {
        "cx": cx + rho * math.cos(theta),
        "cy": cy + rho * math.sin(theta),
        "radius": r_fov * rng.uniform(0.5, 1.0),
        "width": r_fov * rng.uniform(0.15, 0.5),
    }


def halo_profile(shape, geometry: dict) -> np.ndarray:
    """Ring ramp: 1 at the ring radius, falling linearly to 0 over ``width``."""
    yy, xx = _grid(*shape)
    d = np.hypot(xx - geometry["cx"], yy - geometry["cy"])
    return np.clip(1.0 - np.abs(d - geometry["radius"]) / geometry["width"], 0.0, 1.0)


def render_halo(img: ImageRgb, m: float, geometry: dict) -> ImageRgb:
    g = halo_profile((img.height, img.width), geometry)
    return _masked(img, img.data + m * g[..., None])


def add_halo(img: ImageRgb, m: float, rng: np.random.Generator) -> ImageRgb:
    m = _check_m("halo", m)
    geometry = sample_halo_geometry(img.mask(), rng)
    if geometry is None:
        return img.copy()
    return render_halo(img, m, geometry)


HOLE_EDGE = 2.0
SPOT_EDGE = 1.0


def _disk_window(shape, cx: float, cy: float, radius: float, edge: float):
    """Bounding window of a soft disk and its profile inside that window."""
    h, w = shape
    reach = radius + edge
    y0, y1 = max(0, int(cy - reach)), min(h, int(math.ceil(cy + reach)) + 1)
    x0, x1 = max(0, int(cx - reach)), min(w, int(math.ceil(cx + reach)) + 1)
    if y0 >= y1 or x0 >= x1:
        return None, None
    yy = np.arange(y0, y1, dtype=np.float64)[:, None] + 0.5
    xx = np.arange(x0, x1, dtype=np.float64)[None, :] + 0.5
    d = np.hypot(xx - cx, yy - cy)
    return (slice(y0, y1), slice(x0, x1)), np.clip((radius + edge - d) / edge, 0.0, 1.0)


def disk_profile(shape, cx: float, cy: float, radius: float, edge: float) -> np.ndarray:
    """1 inside the disk, linear falloff to 0 over ``edge`` pixels outside it."""
    out = np.zeros(shape)
    window, profile = _disk_window(shape, cx, cy, radius, edge)
    if window is not None:
        out[window] = profile
    return out


def sample_hole_geometry(mask: np.ndarray, rng: np.random.Generator) -> Optional[dict]:
    w = mask.shape[1]
    radius = w * rng.uniform(0.04, 0.12)
    point = _sample_point_in_fov(mask, rng)
    if point is None:
        return None
    return {"cx": point[0], "cy": point[1], "radius": radius}


def render_hole(img: ImageRgb, m: float, geometry: dict) -> ImageRgb:
    a = disk_profile((img.height, img.width), geometry["cx"], geometry["cy"], geometry["radius"], HOLE_EDGE)
    return _masked(img, img.data * (1.0 - m * a)[..., None])


def add_hole(img: ImageRgb, m: float, rng: np.random.Generator) -> ImageRgb:
    m = _check_m("hole", m)
    geometry = sample_hole_geometry(img.mask(), rng)
    if geometry is None:
        return img.copy()
    return render_hole(img, m, geometry)


def sample_spot_geometry(mask: np.ndarray, rng: np.random.Generator) -> Optional[dict]:
    w = mask.shape[1]
    k = int(rng.integers(1, 6))
    spots = []
    for _ in range(k):
        radius = w * rng.uniform(0.01, 0.03)
        level = rng.uniform(0.85, 1.0)
        point = _sample_point_in_fov(mask, rng)
        if point is None:
            continue
        spots.append({
            "cx": point[0],
            "cy": point[1],
            "radius": radius,
            "color": [level, level, 0.9 * level],
        })
    if not spots:
        return None
    return {"spots": spots}


def render_spot(img: ImageRgb, m: float, geometry: dict) -> ImageRgb:
    data = img.data.copy()
    shape = (img.height, img.width)
    for spot in geometry["spots"]:
        window, profile = _disk_window(shape, spot["cx"], spot["cy"], spot["radius"], SPOT_EDGE)
        if window is None:
            continue
        a = m * profile[..., None]
        data[window] = data[window] * (1.0 - a) + a * np.asarray(spot["color"])
    return _masked(img, data)


def add_spot(img: ImageRgb, m: float, rng: np.random.Generator) -> ImageRgb:
    m = _check_m("spot", m)
    geometry = sample_spot_geometry(img.mask(), rng)
    if geometry is None:
        return img.copy()
    return render_spot(img, m, geometry)


def blur(img: ImageRgb, m: float) -> ImageRgb:
    """Separable Gaussian blur with standard deviation ``m`` pixels."""
    m = _check_m("blur", m)
    k = gaussian_kernel(m)
    return img.with_data(_pad_shift_sum(_pad_shift_sum(img.data, k, 0), k, 1))


# --------------------------------------------------------------------------
# composition

_RENDER = {
    "brightness": lambda img, m, g: adjust_brightness(img, m),
    "contrast": lambda img, m, g: adjust_contrast(img, m),
    "saturation": lambda img, m, g: adjust_saturation(img, m),
    "hue": lambda img, m, g: adjust_hue(img, m),
    "sharpness": lambda img, m, g: adjust_sharpness(img, m),
    "halo": lambda img, m, g: render_halo(img, _check_m("halo", m), g),
    "hole": lambda img, m, g: render_hole(img, _check_m("hole", m), g),
    "spot": lambda img, m, g: render_spot(img, _check_m("spot", m), g),
    "blur": lambda img, m, g: blur(img, m),
}
_GEOMETRY = {
    "halo": sample_halo_geometry,
    "hole": sample_hole_geometry,
    "spot": sample_spot_geometry,
}


def sample_plan(mask: np.ndarray, cfg: AugConfig, rng: np.random.Generator) -> AugPlan:
    """Draw the on/off decision, intensity and geometry of every transform.

    All gate uniforms are drawn up front, one per transform whether or not it
    is enabled, so toggling a transform never changes the others' gates.
    """
    steps = []
    gates = rng.uniform(size=len(cfg.order))
    for name, gate in zip(cfg.order, gates):
        spec = cfg.transforms[name]
        if not (spec.enabled and gate < spec.probability):
            steps.append(TransformDraw(name, False))
            continue
        m = float(rng.uniform(spec.low, spec.high)) if spec.high > spec.low else float(spec.low)
        geometry = None
        if name in _GEOMETRY:
            geometry = _GEOMETRY[name](mask, rng)
            if geometry is None:
                steps.append(TransformDraw(name, False, m, {"skipped": True}))
                continue
        steps.append(TransformDraw(name, True, m, geometry))
    return AugPlan(steps)


def apply_plan(img: ImageRgb, plan: AugPlan) -> ImageRgb:
    out = img.copy()
    for step in plan.steps:
        if step.applied:
            out = _RENDER[step.name](out, step.m, step.geometry)
    return out


def fundus_aug(img: ImageRgb, cfg: AugConfig, rng: np.random.Generator):
    """Strong view of ``img``; returns ``(augmented, plan)``."""
    plan = sample_plan(img.mask(), cfg, rng)
    return apply_plan(img, plan), plan


# --------------------------------------------------------------------------
# weak view


def weak_augment(
    img: ImageRgb,
    rng: np.random.Generator,
    flip_prob: float = 0.5,
    min_area: float = 0.9,
) -> ImageRgb:
    """Horizontal flip and a random 90-100% area crop resized back to size."""
    flip = rng.uniform() < flip_prob
    area = rng.uniform(min_area, 1.0)
    h, w = img.height, img.width
    scale = math.sqrt(area)
    ch = min(h, max(1, int(round(h * scale))))
    cw = min(w, max(1, int(round(w * scale))))
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    data = img.data
    if flip:
        data = data[:, ::-1]
    data = resize_array(data[y0:y0 + ch, x0:x0 + cw], w, h)
    mask = None
    if img.fov_mask is not None:
        m = img.fov_mask[:, ::-1] if flip else img.fov_mask
        m = m[y0:y0 + ch, x0:x0 + cw]
        ys = np.minimum(((np.arange(h) + 0.5) * ch / h).astype(np.intp), ch - 1)
        xs = np.minimum(((np.arange(w) + 0.5) * cw / w).astype(np.intp), cw - 1)
        mask = m[ys][:, xs]
    return ImageRgb(np.clip(data, 0.0, 1.0), mask)

"""Float RGB rasters, HSV conversion, bilinear resampling and PNG/JPEG I/O.

Images are held as ``(height, width, 3)`` float64 arrays in [0, 1]. Channel
values are only quantized to 8 bits at file boundaries.
"""

from __future__ import annotations

import os
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageError(Exception):
    """Base class for image I/O failures."""


class MissingImageError(ImageError, FileNotFoundError):
    pass


class UndecodableImageError(ImageError):
    pass


class EmptyImageError(ImageError):
    pass


class UnwritablePathError(ImageError, OSError):
    pass


@dataclass
class ImageRgb:
    data: np.ndarray
    fov_mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) data, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        self.data = data
        if self.fov_mask is not None:
            mask = np.asarray(self.fov_mask, dtype=bool)
            if mask.shape != data.shape[:2]:
                raise ValueError(
                    f"fov_mask shape {mask.shape} does not match image {data.shape[:2]}"
                )
            self.fov_mask = mask

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def mask(self) -> np.ndarray:
        """The attached FOV mask, or the largest inscribed circle if none."""
        if self.fov_mask is not None:
            return self.fov_mask
        return _inscribed(self.height, self.width)

    def with_data(self, data: np.ndarray) -> "ImageRgb":
        return ImageRgb(np.clip(data, 0.0, 1.0), self.fov_mask)

    def copy(self) -> "ImageRgb":
        mask = None if self.fov_mask is None else self.fov_mask.copy()
        return ImageRgb(self.data.copy(), mask)


def inscribed_circle_mask(height: int, width: int) -> np.ndarray:
    """Boolean mask of pixels whose centers lie in the largest inscribed circle."""
    return _inscribed(height, width).copy()


@lru_cache(maxsize=32)
def _inscribed(height: int, width: int) -> np.ndarray:
    cy, cx = height / 2.0, width / 2.0
    r = min(height, width) / 2.0
    yy = np.arange(height)[:, None] + 0.5
    xx = np.arange(width)[None, :] + 0.5
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def fov_geometry(mask: np.ndarray) -> tuple:
    """Center (x, y) and radius of the field of view described by ``mask``.

    The radius is that of a disk with the mask's area, which equals the
    inscribed radius for circular masks.
    """
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        h, w = mask.shape
        return w / 2.0, h / 2.0, 0.0
    cx = xs.mean() + 0.5
    cy = ys.mean() + 0.5
    r = float(np.sqrt(len(xs) / np.pi))
    return float(cx), float(cy), r


def load_image(path) -> ImageRgb:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingImageError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UndecodableImageError(f"cannot decode image {path}: {exc}") from exc
    if arr.size == 0 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptyImageError(f"zero-dimension image: {path}")
    return ImageRgb(arr / 255.0)


def quantize(data: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 with round(v * 255)."""
    return np.rint(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: ImageRgb, path) -> None:
    path = os.fspath(path)
    try:
        Image.fromarray(quantize(img.data), mode="RGB").save(path, format="PNG")
    except (PermissionError, FileNotFoundError, IsADirectoryError) as exc:
        raise UnwritablePathError(f"cannot write image to {path}: {exc}") from exc


def resize_bilinear(img: ImageRgb, new_w: int, new_h: int) -> ImageRgb:
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {new_w}x{new_h}")
    data = resize_array(img.data, new_w, new_h)
    mask = None
    if img.fov_mask is not None:
        mask = _resize_nearest(img.fov_mask, new_w, new_h)
    return ImageRgb(np.clip(data, 0.0, 1.0), mask)


def _sample_axis(n_src: int, n_dst: int):
    # half-pixel centered source coordinates, clamped to the valid range
    x = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    x = np.clip(x, 0.0, n_src - 1)
    i0 = np.floor(x).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_src - 1)
    t = x - i0
    return i0, i1, t


def resize_array(data: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize of ``(..., h, w, c)`` arrays with half-pixel centers."""
    h, w = data.shape[-3], data.shape[-2]
    if (h, w) == (new_h, new_w):
        return data.copy()
    y0, y1, ty = _sample_axis(h, new_h)
    x0, x1, tx = _sample_axis(w, new_w)
    ty = ty[:, None, None]
    tx = tx[None, :, None]
    top = data[..., y0, :, :]
    bot = data[..., y1, :, :]
    rows = top * (1.0 - ty) + bot * ty
    return rows[..., :, x0, :] * (1.0 - tx) + rows[..., :, x1, :] * tx


def _resize_nearest(mask: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    h, w = mask.shape
    ys = np.minimum(((np.arange(new_h) + 0.5) * h / new_h).astype(np.intp), h - 1)
    xs = np.minimum(((np.arange(new_w) + 0.5) * w / new_w).astype(np.intp), w - 1)
    return mask[ys][:, xs]


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV on arrays whose last axis is (r, g, b).

    Hue is in degrees [0, 360); gray pixels get hue 0.
    """
    rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = np.maximum(np.maximum(r, g), b)
    delta = v - np.minimum(np.minimum(r, g), b)
    gray = delta == 0
    safe = np.where(gray, 1.0, delta)
    h = np.where(v == r, (g - b) / safe, np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h *= 60.0
    h[gray] = 0.0
    h %= 360.0
    s = np.divide(delta, v, out=np.zeros_like(v), where=v > 0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    hp = np.mod(hsv[..., 0], 360.0) / 60.0
    v = np.clip(hsv[..., 2], 0.0, 1.0)
    vs = v * np.clip(hsv[..., 1], 0.0, 1.0)
    out = np.empty(hp.shape + (3,))
    # channel n: v - v*s*clip(min(k, 4 - k), 0, 1) with k = (n + h/60) mod 6
    for i, n in enumerate((5.0, 3.0, 1.0)):
        k = hp + n
        k = np.where(k >= 6.0, k - 6.0, k)
        out[..., i] = v - vs * np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)
    return out

"""Image representation, file I/O, color conversion, sampling, and gradients.

Pixels are stored as float64 in 0..255 with a boolean validity mask.
Quantization to 8 bits happens only when writing PNG output. Pixels with
mask=False always hold the sentinel color (0, 0, 0); correctness must rely
on the mask, never on the sentinel value.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .exceptions import DecodeError, ImageWriteError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class Image:
    """RGB raster with a per-pixel validity mask. Immutable after construction."""

    pixels: np.ndarray  # (H, W, 3) float64 in 0..255
    mask: np.ndarray = field(default=None)  # (H, W) bool

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError("image must have nonzero dimensions")
        if self.mask is None:
            m = np.ones(px.shape[:2], dtype=bool)
        else:
            m = np.asarray(self.mask, dtype=bool)
        if m.shape != px.shape[:2]:
            raise ValueError(f"mask shape {m.shape} != raster shape {px.shape[:2]}")
        px = px.copy()
        px[~m] = 0.0
        px.setflags(write=False)
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "mask", m)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape[:2]


def load_image(path) -> Image:
    """Load a PNG or binary PPM (P6) file as an Image.

    Plain RGB inputs get an all-true mask; an RGBA PNG's alpha plane is
    interpreted as the mask (alpha >= 128 means valid).
    """
    path = os.fspath(path)
    try:
        with PILImage.open(path) as im:
            fmt = im.format
            if fmt not in ("PNG", "PPM"):
                raise DecodeError(f"{path}: unsupported format {fmt!r} (need PNG or binary PPM)")
            if im.width == 0 or im.height == 0:
                raise DecodeError(f"{path}: zero-dimension image")
            if im.mode == "RGBA":
                arr = np.asarray(im, dtype=np.uint8)
                return Image(arr[:, :, :3].astype(np.float64), arr[:, :, 3] >= 128)
            if im.mode not in ("RGB", "L", "P"):
                raise DecodeError(f"{path}: unsupported pixel mode {im.mode!r} (need 8-bit)")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            return Image(arr.astype(np.float64))
    except DecodeError:
        raise
    except (FileNotFoundError, UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc


def save_image(img: Image, path, with_alpha: bool = False) -> None:
    """Write an Image as PNG, quantizing round-half-up to 8 bits.

    Masked-out pixels are written as the sentinel color. With `with_alpha`,
    the mask is stored as the alpha channel (255 valid, 0 invalid).
    """
    path = os.fspath(path)
    data = quantize(img.pixels)
    if with_alpha:
        alpha = np.where(img.mask, 255, 0).astype(np.uint8)
        data = np.dstack([data, alpha])
        pil = PILImage.fromarray(data, mode="RGBA")
    else:
        pil = PILImage.fromarray(data, mode="RGB")
    try:
        pil.save(path, format="PNG")
    except (OSError, ValueError) as exc:
        raise ImageWriteError(f"{path}: cannot write PNG ({exc})") from exc


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Round-half-up float 0..255 values to uint8."""
    return np.clip(np.floor(np.asarray(pixels, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def to_grayscale(img: Image) -> np.ndarray:
    """Luma plane 0.299 R + 0.587 G + 0.114 B; masked pixels read 0."""
    r, g, b = LUMA_WEIGHTS
    luma = r * img.pixels[:, :, 0] + g * img.pixels[:, :, 1] + b * img.pixels[:, :, 2]
    return np.where(img.mask, luma, 0.0)


def gradient_magnitude(plane: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude with replicated borders."""
    p = np.asarray(plane, dtype=np.float64)
    padded = np.pad(p, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return np.sqrt(gx * gx + gy * gy)


def masked_gradient_magnitude(plane: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Gradient magnitude that treats invalid neighbors like replicated borders.

    Invalid pixels never contribute a value; the result is zero outside the
    mask so masked pixels cannot influence any energy term.
    """
    p = np.asarray(plane, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    pp = np.pad(p, 1, mode="edge")
    pm = np.pad(m, 1, mode="edge")

    def pick(values, valid):
        return np.where(valid, values, p)

    left = pick(pp[1:-1, :-2], pm[1:-1, :-2])
    right = pick(pp[1:-1, 2:], pm[1:-1, 2:])
    up = pick(pp[:-2, 1:-1], pm[:-2, 1:-1])
    down = pick(pp[2:, 1:-1], pm[2:, 1:-1])
    gx = (right - left) / 2.0
    gy = (down - up) / 2.0
    out = np.sqrt(gx * gx + gy * gy)
    out[~m] = 0.0
    return out


def bilinear_sample(img: Image, x: float, y: float):
    """Bilinear sample at real coordinates; valid only if every contributing
    neighbor is in bounds and masked valid. Returns (rgb array, valid)."""
    colors, valid = sample_bilinear_grid(
        img.pixels, img.mask, np.asarray([x], dtype=np.float64), np.asarray([y], dtype=np.float64)
    )
    return colors[0], bool(valid[0])


def sample_bilinear_grid(pixels: np.ndarray, mask: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Vectorized bilinear sampling of an RGB raster at float coordinates.

    Corners with zero interpolation weight do not affect validity, so exact
    integer coordinates on the last row/column stay valid.
    """
    h, w = pixels.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    colors = np.zeros(xs.shape + (3,), dtype=np.float64)
    valid = np.ones(xs.shape, dtype=bool)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            weight = wx * wy
            cx = x0 + dx
            cy = y0 + dy
            inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
            cxc = np.clip(cx, 0, w - 1)
            cyc = np.clip(cy, 0, h - 1)
            ok = inside & mask[cyc, cxc]
            # weights below float-noise level do not count as contributing
            contributes = weight > 1e-12
            valid &= ok | ~contributes
            corner = np.where((ok & contributes)[..., None], pixels[cyc, cxc], 0.0)
            colors += weight[..., None] * corner
    return colors, valid

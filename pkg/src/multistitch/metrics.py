"""Quantitative evaluation: PSNR, multi-scale SSIM, and crop-based eval.

The crop protocol removes a band from one side of the reference, stitches
the cropped reference with the candidate, then scores (i) the band region
against the held-out ground truth and (ii) the full reference footprint
against the original reference, each with MS-SSIM and PSNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import EvaluationError, StitchError
from .image import Image, to_grayscale

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
DYNAMIC_RANGE = 255.0
MIN_DIM = 16

REGION_GROUND_TRUTH = "ground-truth-region"
REGION_UNCROPPED = "uncropped-reference"
CROP_SIDES = ("left", "right", "top", "bottom")


@dataclass
class EvalRow:
    dataset: str
    region: str
    metric: str
    score: float
    status: str = "ok"


def write_eval_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dataset,region,metric,score,status\n")
        for r in rows:
            fh.write(f"{r.dataset},{r.region},{r.metric},{r.score},{r.status}\n")


def psnr(a: Image, b: Image) -> float:
    """10 log10(255^2 / MSE) over RGB on jointly-valid pixels; identical
    images return +inf."""
    if a.shape != b.shape:
        raise EvaluationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    joint = a.mask & b.mask
    if not joint.any():
        raise EvaluationError("no jointly-valid pixels")
    diff = a.pixels[joint] - b.pixels[joint]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE * DYNAMIC_RANGE / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    xs = np.arange(size) - half
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def _filter_valid(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """'valid'-mode separable correlation with an odd symmetric kernel."""
    r = (len(kernel) - 1) // 2
    tmp = ndimage.correlate1d(plane, kernel, axis=0, mode="constant")
    tmp = ndimage.correlate1d(tmp, kernel, axis=1, mode="constant")
    return tmp[r:plane.shape[0] - r, r:plane.shape[1] - r]


def _ssim_maps(a: np.ndarray, b: np.ndarray):
    """Luminance and contrast-structure maps of two luma planes."""
    kernel = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_a = _filter_valid(a, kernel)
    mu_b = _filter_valid(b, kernel)
    var_a = _filter_valid(a * a, kernel) - mu_a * mu_a
    var_b = _filter_valid(b * b, kernel) - mu_b * mu_b
    cov = _filter_valid(a * b, kernel) - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    p = plane[:h - h % 2, :w - w % 2]
    return 0.25 * (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2])


def ms_ssim(a: Image, b: Image) -> float:
    """Multi-scale SSIM on luma, up to 5 scales with dyadic 2x2-mean
    downsampling; the scale weights renormalize when scales are dropped so
    small images still score in [0, 1]."""
    if a.shape != b.shape:
        raise EvaluationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < MIN_DIM:
        raise EvaluationError(f"images must be at least {MIN_DIM} px per side")
    pa = to_grayscale(a)
    pb = to_grayscale(b)

    dims = min(a.shape)
    n_scales = 1
    while n_scales < len(MSSSIM_WEIGHTS) and dims // 2 >= SSIM_WINDOW:
        dims //= 2
        n_scales += 1
    weights = np.asarray(MSSSIM_WEIGHTS[:n_scales])
    weights = weights / weights.sum()

    score = 1.0
    for scale in range(n_scales):
        lum, cs = _ssim_maps(pa, pb)
        if scale == n_scales - 1:
            value = max(float(np.mean(lum * cs)), 0.0)
        else:
            value = max(float(np.mean(cs)), 0.0)
            pa = _downsample2(pa)
            pb = _downsample2(pb)
        score *= value ** weights[scale]
    return float(min(max(score, 0.0), 1.0))


def extract_region(img: Image, x0: int, y0: int, width: int, height: int) -> Image:
    """Copy a region, padding out-of-canvas pixels as masked-out sentinel."""
    pixels = np.zeros((height, width, 3))
    mask = np.zeros((height, width), dtype=bool)
    sx0 = max(0, x0)
    sy0 = max(0, y0)
    sx1 = min(img.width, x0 + width)
    sy1 = min(img.height, y0 + height)
    if sx1 > sx0 and sy1 > sy0:
        pixels[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = img.pixels[sy0:sy1, sx0:sx1]
        mask[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = img.mask[sy0:sy1, sx0:sx1]
    return Image(pixels, mask)


def _subimage(img: Image, y0: int, y1: int, x0: int, x1: int) -> Image:
    return Image(img.pixels[y0:y1, x0:x1].copy(), img.mask[y0:y1, x0:x1].copy())


def _crop_geometry(ref: Image, crop_px: int, side: str):
    """Returns (cropped reference, ground-truth band, band origin in original
    reference coords, cropped-reference origin in original reference coords)."""
    w, h = ref.width, ref.height
    if side in ("left", "right") and crop_px >= w:
        raise EvaluationError("crop width exceeds the reference width")
    if side in ("top", "bottom") and crop_px >= h:
        raise EvaluationError("crop height exceeds the reference height")
    if side == "left":
        return (_subimage(ref, 0, h, crop_px, w), _subimage(ref, 0, h, 0, crop_px),
                (0, 0), (crop_px, 0))
    if side == "right":
        return (_subimage(ref, 0, h, 0, w - crop_px), _subimage(ref, 0, h, w - crop_px, w),
                (w - crop_px, 0), (0, 0))
    if side == "top":
        return (_subimage(ref, crop_px, h, 0, w), _subimage(ref, 0, crop_px, 0, w),
                (0, 0), (0, crop_px))
    if side == "bottom":
        return (_subimage(ref, 0, h - crop_px, 0, w), _subimage(ref, h - crop_px, h, 0, w),
                (0, h - crop_px), (0, 0))
    raise EvaluationError(f"unknown crop side {side!r} (need one of {CROP_SIDES})")


def crop_eval(reference: Image, candidate: Image, crop_px: int, crop_side: str,
              stitch_fn, correspondences=None, dataset: str = "dataset"):
    """Crop-based quantitative evaluation; returns 4 EvalRows.

    `stitch_fn(cropped_reference, candidate, correspondences_or_None)` must
    return (panorama Image, (ox, oy) canvas offset of the cropped
    reference). Supplied correspondences are given in original-reference
    coordinates and are shifted/filtered to the cropped frame here, which
    also guarantees the held-out band never reaches the stitcher.
    """
    cropped, band, band_origin, crop_origin = _crop_geometry(reference, crop_px, crop_side)

    shifted = None
    if correspondences is not None:
        from .correspond import CorrespondenceSet
        xy0 = correspondences.xy0 - np.asarray(crop_origin, dtype=np.float64)
        inside = ((xy0[:, 0] >= 0) & (xy0[:, 0] <= cropped.width - 1)
                  & (xy0[:, 1] >= 0) & (xy0[:, 1] <= cropped.height - 1))
        shifted = CorrespondenceSet(xy0[inside], correspondences.xy1[inside],
                                    correspondences.scores[inside], correspondences.source)

    try:
        panorama, offset = stitch_fn(cropped, candidate, shifted)
    except StitchError:
        return [EvalRow(dataset, region, metric, math.nan, "failed to stitch")
                for region in (REGION_GROUND_TRUTH, REGION_UNCROPPED)
                for metric in ("MS-SSIM", "PSNR")]

    ox, oy = int(offset[0]), int(offset[1])
    orig_x = ox - crop_origin[0]
    orig_y = oy - crop_origin[1]

    got_band = extract_region(panorama, orig_x + band_origin[0], orig_y + band_origin[1],
                              band.width, band.height)
    got_full = extract_region(panorama, orig_x, orig_y, reference.width, reference.height)

    rows = []
    for region, got, truth in ((REGION_GROUND_TRUTH, got_band, band),
                               (REGION_UNCROPPED, got_full, reference)):
        for metric, fn in (("MS-SSIM", ms_ssim), ("PSNR", psnr)):
            try:
                rows.append(EvalRow(dataset, region, metric, fn(got, truth)))
            except EvaluationError:
                # e.g. the stitch left the compared region entirely unfilled
                rows.append(EvalRow(dataset, region, metric, math.nan, "no-overlap"))
    return rows

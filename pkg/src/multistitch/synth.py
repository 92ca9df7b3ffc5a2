"""Deterministic synthetic stitching scenes with exact ground truth.

Each scene renders textured layers (smooth random blobs plus glyph
rectangles) into a wide world strip, exposes a reference/candidate pair cut
from it, and emits exact correspondences and the true per-layer motions.
Scene types:

  single-plane       one global translation; the whole frame moves together
  two-plane          a background plane and a horizontal strip moving with
                     motions that differ by tens of pixels
  strips-translation a static-ish background plus two glyph strips that
                     translate differently between the exposures
  duplication-trap   a distinctive glyph near the reference edge moves so
                     its second appearance lands beyond the reference,
                     which forces a duplicate unless the duplication term
                     intervenes

All geometry scales with the requested size; the canonical values quoted in
comments are for 640x480.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .correspond import CorrespondenceSet
from .exceptions import ConfigError
from .image import Image
from .registration import Homography

SCENE_TYPES = ("single-plane", "two-plane", "strips-translation", "duplication-trap")


@dataclass
class SyntheticScene:
    name: str
    reference: Image
    candidate: Image
    correspondences: CorrespondenceSet
    motions: list            # true candidate->reference Homography per layer
    layer_of: np.ndarray     # layer index per correspondence


def _smooth_texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Blobby color field with enough structure for corners and seams."""
    cell = 16
    base = rng.uniform(70.0, 185.0, size=(h // cell + 2, w // cell + 2, 3))
    up = np.repeat(np.repeat(base, cell, axis=0), cell, axis=1)[:h, :w]
    tex = ndimage.gaussian_filter(up, sigma=(6.0, 6.0, 0.0))
    n_blobs = max(20, (h * w) // 4000)
    ys = rng.uniform(0, h, n_blobs)
    xs = rng.uniform(0, w, n_blobs)
    radii = rng.uniform(6.0, 28.0, n_blobs)
    colors = rng.uniform(-70.0, 70.0, size=(n_blobs, 3))
    yy = np.arange(h, dtype=np.float64)
    xx = np.arange(w, dtype=np.float64)
    for cy, cx, r, dc in zip(ys, xs, radii, colors):
        y0 = max(0, int(cy - 3 * r))
        y1 = min(h, int(cy + 3 * r) + 1)
        x0 = max(0, int(cx - 3 * r))
        x1 = min(w, int(cx + 3 * r) + 1)
        d2 = ((xx[x0:x1][None, :] - cx) ** 2 + (yy[y0:y1][:, None] - cy) ** 2)
        tex[y0:y1, x0:x1] += np.exp(-d2 / (2 * (r / 2) ** 2))[..., None] * dc
    return np.clip(tex, 8.0, 247.0)


def _stamp_glyph(tex: np.ndarray, cx: int, cy: int, half: int,
                 color, bar_color) -> None:
    """Bright glyph rectangle with vertical bars (text-like corners)."""
    h, w = tex.shape[:2]
    x0, x1 = max(0, cx - half), min(w, cx + half)
    y0, y1 = max(0, cy - half), min(h, cy + half)
    tex[y0:y1, x0:x1] = color
    for bx in range(x0 + 3, x1 - 2, 8):
        tex[y0 + 3:y1 - 3, bx:bx + 3] = bar_color


def _grid_points(x_lo, x_hi, y_lo, y_hi, step):
    xs = np.arange(x_lo, x_hi + 1e-9, step, dtype=np.float64)
    ys = np.arange(y_lo, y_hi + 1e-9, step, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def make_synthetic_scene(scene: str, rng_seed: int, size=(640, 480),
                         pan=None) -> SyntheticScene:
    """Render a named scene; deterministic given (scene, rng_seed, size)."""
    if scene not in SCENE_TYPES:
        raise ConfigError(f"unknown scene type {scene!r} (need one of {SCENE_TYPES})")
    w, h = int(size[0]), int(size[1])
    rng = np.random.default_rng([SCENE_TYPES.index(scene), rng_seed])
    if pan is None:
        pan = round(0.3125 * w)  # 200 at w=640
    pan = int(pan)
    if pan <= 0:
        raise ConfigError("scene pan must be positive")
    if scene == "single-plane":
        return _single_plane(rng, w, h, pan)
    if scene == "two-plane":
        return _two_plane(rng, w, h, pan)
    if scene == "strips-translation":
        return _strips(rng, w, h, pan)
    return _duplication_trap(rng, w, h, pan)


def _single_plane(rng, w, h, pan) -> SyntheticScene:
    # reference shows world columns [0, w); candidate shows [pan, pan + w)
    world = _smooth_texture(rng, h, w + pan)
    ref = Image(world[:, 0:w].copy())
    cand = Image(world[:, pan:pan + w].copy())
    margin = 8
    step = max(8, round(0.0375 * w))
    pts = _grid_points(pan + margin, w - 1 - margin, margin, h - 1 - margin, step)
    cs = CorrespondenceSet(pts, pts - (pan, 0), source="synthetic")
    return SyntheticScene("single-plane", ref, cand, cs,
                          [Homography.translation(pan, 0)],
                          np.zeros(len(cs), dtype=np.int64))


def _two_plane(rng, w, h, pan) -> SyntheticScene:
    pan_b = (pan + round(0.05 * w), round(0.025 * h))   # (232, 12) at 640x480
    strip_top = round(h * 0.5)                          # plane B occupies the bottom half
    tex_a = _smooth_texture(rng, h, w + pan_b[0])
    tex_b = _smooth_texture(rng, h + pan_b[1], w + pan_b[0])

    ref_px = tex_a[:, 0:w].copy()
    ref_px[strip_top:, :] = tex_b[strip_top:h, 0:w]
    cand_px = tex_a[:, pan:pan + w].copy()
    c_top = strip_top - pan_b[1]
    cand_px[c_top:h - pan_b[1], :] = tex_b[strip_top:h, pan_b[0]:pan_b[0] + w]

    margin = 8
    step_a = max(8, round(0.0375 * w))
    step_b = max(6, round(0.025 * w))
    a_pts = _grid_points(pan + margin, w - 1 - margin, margin, strip_top - 16, step_a)
    b_pts = _grid_points(pan_b[0] + margin, w - 1 - margin,
                         strip_top + 12, h - 1 - margin - pan_b[1], step_b)
    xy0 = np.concatenate([a_pts, b_pts])
    xy1 = np.concatenate([a_pts - (pan, 0), b_pts - pan_b])
    layer = np.concatenate([np.zeros(len(a_pts), np.int64), np.ones(len(b_pts), np.int64)])
    cs = CorrespondenceSet(xy0, xy1, source="synthetic")
    return SyntheticScene("two-plane", Image(ref_px), Image(cand_px), cs,
                          [Homography.translation(pan, 0),
                           Homography.translation(*pan_b)], layer)


def _strips(rng, w, h, pan) -> SyntheticScene:
    delta = round(0.056 * w)                     # 36 at w=640
    pans = [pan, pan + delta, pan - delta]       # background, strip 1, strip 2
    bands = [None,
             (round(0.29 * h), round(0.42 * h)),  # strip 1 rows
             (round(0.58 * h), round(0.71 * h))]  # strip 2 rows
    max_pan = max(pans)
    bg = _smooth_texture(rng, h, w + max_pan)
    strips_tex = []
    for which in (1, 2):
        tex = _smooth_texture(rng, h, w + max_pan) * 0.4 + 150.0
        lo, hi = bands[which]
        step = round(0.1 * w)
        for cx in range(step // 2, w + max_pan - 10, step):
            _stamp_glyph(tex, cx, (lo + hi) // 2, (hi - lo) // 2 - 4,
                         (240.0, 240.0, 240.0) if which == 1 else (30.0, 30.0, 60.0),
                         (40.0, 40.0, 40.0) if which == 1 else (220.0, 220.0, 200.0))
        strips_tex.append(tex)

    ref_px = bg[:, 0:w].copy()
    cand_px = bg[:, pan:pan + w].copy()
    for which in (1, 2):
        lo, hi = bands[which]
        ref_px[lo:hi, :] = strips_tex[which - 1][lo:hi, 0:w]
        cand_px[lo:hi, :] = strips_tex[which - 1][lo:hi, pans[which]:pans[which] + w]

    margin = 8
    bg_rows = [(margin, bands[1][0] - 12), (bands[1][1] + 12, bands[2][0] - 12),
               (bands[2][1] + 12, h - 1 - margin)]
    bg_step = max(10, round(0.0625 * w))
    bg_pts = np.concatenate([_grid_points(pan + margin, w - 1 - margin, lo, hi, bg_step)
                             for lo, hi in bg_rows])
    pts = [bg_pts]
    layer = [np.zeros(len(bg_pts), np.int64)]
    xy1 = [bg_pts - (pan, 0)]
    strip_step = max(5, round(0.015625 * w))
    for which in (1, 2):
        lo, hi = bands[which]
        p = _grid_points(pans[which] + margin, w - 1 - margin, lo + 6, hi - 7, strip_step)
        pts.append(p)
        xy1.append(p - (pans[which], 0))
        layer.append(np.full(len(p), which, np.int64))
    cs = CorrespondenceSet(np.concatenate(pts), np.concatenate(xy1), source="synthetic")
    return SyntheticScene("strips-translation", Image(ref_px), Image(cand_px), cs,
                          [Homography.translation(p, 0) for p in pans],
                          np.concatenate(layer))


def _duplication_trap(rng, w, h, pan) -> SyntheticScene:
    glyph_move = round(0.15625 * w)              # 100 at w=640: scene motion of the glyph
    half = round(0.05 * w)                       # 32: glyph half-size
    ref_gx = w - 2 * half + 16                   # 592: glyph center in the reference
    gy = h // 2
    cand_gx_canvas = ref_gx + glyph_move         # 692: second appearance, beyond the reference

    world = _smooth_texture(rng, h, w + pan)
    ref_px = world[:, 0:w].copy()
    _stamp_glyph(ref_px, ref_gx, gy, half, (250.0, 60.0, 40.0), (255.0, 230.0, 40.0))
    cand_px = world[:, pan:pan + w].copy()
    _stamp_glyph(cand_px, cand_gx_canvas - pan, gy, half,
                 (250.0, 60.0, 40.0), (255.0, 230.0, 40.0))

    margin = 8
    bg_step = max(8, round(0.0375 * w))
    bg_pts = _grid_points(pan + margin, w - 1 - margin, margin, h - 1 - margin, bg_step)
    exclusion = round(2.2 * half)
    keep = (np.linalg.norm(bg_pts - (ref_gx, gy), axis=1) > exclusion) \
        & (np.linalg.norm(bg_pts - (cand_gx_canvas, gy), axis=1) > exclusion)
    bg_pts = bg_pts[keep]
    g_step = max(6, round(0.01875 * w))
    g_pts = _grid_points(ref_gx - half + 8, ref_gx + half - 8,
                         gy - half + 8, gy + half - 8, g_step)
    # the glyph's texels sit at p1 = p0 - glyph_move in candidate coordinates,
    # so its true candidate->reference motion is T(+glyph_move)
    xy0 = np.concatenate([bg_pts, g_pts])
    xy1 = np.concatenate([bg_pts - (pan, 0), g_pts - (glyph_move, 0)])
    cs = CorrespondenceSet(xy0, xy1, source="synthetic")
    layer = np.concatenate([np.zeros(len(bg_pts), np.int64), np.ones(len(g_pts), np.int64)])
    return SyntheticScene("duplication-trap", Image(ref_px), Image(cand_px), cs,
                          [Homography.translation(pan, 0),
                           Homography.translation(glyph_move, 0)], layer)

"""Sparse point correspondences: file format, built-in matcher, reprojection.

The text format is one match per line, "x0 y0 x1 y1 [score]", with '#'
comments. The built-in fallback matcher (Harris corners + normalized
cross-correlation) replaces an external feature matcher for self-contained
runs; it is deliberately simple and only expected to work on the kinds of
textured scenes the test suite generates.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import CorrespondenceParseError, InsufficientMatchesError, ValidationError
from .image import Image, to_grayscale

log = logging.getLogger(__name__)

INFINITE_REPROJECTION = 1e12

# Frozen matcher defaults.
HARRIS_K = 0.04
NMS_RADIUS = 5
MAX_CORNERS = 2000
PATCH_SIZE = 11
NCC_MIN = 0.8
MIN_MATCHES = 8


@dataclass(frozen=True)
class Correspondence:
    """One matched point pair: p0 in the reference image, p1 in the candidate."""

    p0: tuple
    p1: tuple
    score: float = 1.0


@dataclass
class CorrespondenceSet:
    """Ordered, index-stable set of correspondences.

    Index identity is stable for the life of a pipeline run: inlier sets
    refer to these indices.
    """

    xy0: np.ndarray  # (n, 2) float64, points in the reference image
    xy1: np.ndarray  # (n, 2) float64, points in the candidate image
    scores: np.ndarray = field(default=None)  # (n,) float64
    source: str = "file"
    dropped_duplicates: int = 0

    def __post_init__(self):
        self.xy0 = np.asarray(self.xy0, dtype=np.float64).reshape(-1, 2)
        self.xy1 = np.asarray(self.xy1, dtype=np.float64).reshape(-1, 2)
        if self.xy0.shape != self.xy1.shape:
            raise ValueError("xy0 and xy1 must have matching shapes")
        if self.scores is None:
            self.scores = np.ones(len(self.xy0), dtype=np.float64)
        else:
            self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if self.scores.shape[0] != self.xy0.shape[0]:
            raise ValueError("scores length must match point count")

    def __len__(self) -> int:
        return self.xy0.shape[0]

    def pair(self, i: int) -> Correspondence:
        return Correspondence(tuple(self.xy0[i]), tuple(self.xy1[i]), float(self.scores[i]))

    def subset(self, indices) -> "CorrespondenceSet":
        idx = np.asarray(indices, dtype=np.int64)
        return CorrespondenceSet(self.xy0[idx], self.xy1[idx], self.scores[idx], self.source)

    def validate_bounds(self, ref_size, cand_size) -> None:
        """Check every point lies inside its image; sizes are (width, height)."""
        w0, h0 = ref_size
        w1, h1 = cand_size
        bad0 = (self.xy0[:, 0] < 0) | (self.xy0[:, 0] > w0 - 1) | (self.xy0[:, 1] < 0) | (self.xy0[:, 1] > h0 - 1)
        bad1 = (self.xy1[:, 0] < 0) | (self.xy1[:, 0] > w1 - 1) | (self.xy1[:, 1] < 0) | (self.xy1[:, 1] > h1 - 1)
        bad = bad0 | bad1
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"correspondence {i} out of image bounds: "
                                  f"{tuple(self.xy0[i])} / {tuple(self.xy1[i])}")


def parse_correspondences(stream) -> CorrespondenceSet:
    """Parse the "x0 y0 x1 y1 [score]" text format.

    Lines starting with '#' (and inline '#' tails) are ignored. Exact
    duplicate pairs are dropped with a warning count.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    xy0, xy1, scores = [], [], []
    seen = set()
    dropped = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) not in (4, 5):
            raise CorrespondenceParseError(lineno, f"expected 4 or 5 numbers, got {len(tokens)}")
        try:
            values = [float(t) for t in tokens]
        except ValueError as exc:
            raise CorrespondenceParseError(lineno, f"non-numeric token in {line!r}") from exc
        if not all(np.isfinite(values)):
            raise CorrespondenceParseError(lineno, "non-finite value")
        key = tuple(values[:4])
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        xy0.append(values[0:2])
        xy1.append(values[2:4])
        scores.append(values[4] if len(values) == 5 else 1.0)
    if dropped:
        log.warning("dropped %d exact duplicate correspondence pair(s)", dropped)
    return CorrespondenceSet(
        np.asarray(xy0, dtype=np.float64).reshape(-1, 2),
        np.asarray(xy1, dtype=np.float64).reshape(-1, 2),
        np.asarray(scores, dtype=np.float64),
        source="file",
        dropped_duplicates=dropped,
    )


def serialize_correspondences(cs: CorrespondenceSet) -> str:
    """Canonical text form; parse_correspondences is a left inverse."""
    lines = ["# x0 y0 x1 y1 score"]
    for (x0, y0), (x1, y1), s in zip(cs.xy0, cs.xy1, cs.scores):
        lines.append(" ".join(repr(float(v)) for v in (x0, y0, x1, y1, s)))
    return "\n".join(lines) + "\n"


def _harris_response(gray: np.ndarray, k: float = HARRIS_K, sigma: float = 1.5) -> np.ndarray:
    gy, gx = np.gradient(gray)
    sxx = ndimage.gaussian_filter(gx * gx, sigma)
    syy = ndimage.gaussian_filter(gy * gy, sigma)
    sxy = ndimage.gaussian_filter(gx * gy, sigma)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - k * trace * trace


def _detect_corners(gray: np.ndarray, max_corners: int) -> np.ndarray:
    """Harris corners with non-max suppression; returns (n, 2) x,y integer coords."""
    response = _harris_response(gray)
    size = 2 * NMS_RADIUS + 1
    local_max = ndimage.maximum_filter(response, size=size, mode="nearest")
    # a low relative floor: one very sharp corner must not drown out the rest
    peak = (response == local_max) & (response > 1e-4 * response.max()) & (response > 1e-8)
    margin = PATCH_SIZE // 2
    peak[:margin, :] = False
    peak[-margin:, :] = False
    peak[:, :margin] = False
    peak[:, -margin:] = False
    ys, xs = np.nonzero(peak)
    if len(xs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    order = np.argsort(-response[ys, xs], kind="stable")[:max_corners]
    return np.stack([xs[order], ys[order]], axis=1)


def _normalized_patches(gray: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Extract zero-mean unit-norm patches around integer corners."""
    r = PATCH_SIZE // 2
    patches = np.empty((len(corners), PATCH_SIZE * PATCH_SIZE), dtype=np.float64)
    for i, (x, y) in enumerate(corners):
        patches[i] = gray[y - r:y + r + 1, x - r:x + r + 1].ravel()
    patches -= patches.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(patches, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    return patches / norms


def detect_and_match(i0: Image, i1: Image, max_corners: int = MAX_CORNERS,
                     ncc_min: float = NCC_MIN) -> CorrespondenceSet:
    """Harris + NCC fallback matcher: mutual-best matches with NCC >= 0.8."""
    g0 = to_grayscale(i0)
    g1 = to_grayscale(i1)
    c0 = _detect_corners(g0, max_corners)
    c1 = _detect_corners(g1, max_corners)
    if len(c0) == 0 or len(c1) == 0:
        raise InsufficientMatchesError(
            f"too few corners to match ({len(c0)} in reference, {len(c1)} in candidate)")
    p0 = _normalized_patches(g0, c0)
    p1 = _normalized_patches(g1, c1)
    ncc = p0 @ p1.T
    best1 = np.argmax(ncc, axis=1)
    best0 = np.argmax(ncc, axis=0)
    rows = np.arange(len(c0))
    mutual = best0[best1] == rows
    strong = ncc[rows, best1] >= ncc_min
    keep = mutual & strong
    if keep.sum() < MIN_MATCHES:
        raise InsufficientMatchesError(
            f"matcher produced {int(keep.sum())} matches; need at least {MIN_MATCHES}")
    idx0 = rows[keep]
    idx1 = best1[keep]
    return CorrespondenceSet(
        c0[idx0].astype(np.float64),
        c1[idx1].astype(np.float64),
        ncc[idx0, idx1],
        source="builtin-matcher",
    )


def project_points(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 3x3 projective map to (n, 2) points; near-horizon points map
    to INFINITE_REPROJECTION coordinates instead of producing NaN/Inf."""
    m = np.asarray(matrix, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    homog = np.column_stack([pts, np.ones(len(pts))])
    mapped = homog @ m.T
    w = mapped[:, 2]
    safe = np.abs(w) >= 1e-12
    out = np.full((len(pts), 2), INFINITE_REPROJECTION, dtype=np.float64)
    out[safe] = mapped[safe, :2] / w[safe, None]
    return out


def reprojection_errors(matrix, cs: CorrespondenceSet) -> np.ndarray:
    """Reprojection error of every pair under a candidate->reference map."""
    mapped = project_points(np.asarray(matrix, dtype=np.float64), cs.xy1)
    diff = mapped - cs.xy0
    err = np.sqrt(np.sum(diff * diff, axis=1))
    return np.minimum(err, INFINITE_REPROJECTION)


def reprojection_error(matrix, c: Correspondence) -> float:
    """Euclidean distance between H(p1) and p0 in reference pixels."""
    cs = CorrespondenceSet(np.asarray([c.p0]), np.asarray([c.p1]))
    return float(reprojection_errors(matrix, cs)[0])

"""Candidate registration generation: homography finding, filtering, refinement.

A three-step process produces up to `max_registrations` diverse registrations
of the candidate image: locally-seeded LMedS homography hypotheses, screening
plus inlier-set deduplication, then a sigmoid-objective refinement followed by
a content-preserving-warp mesh that captures local deviations from the global
homography. Homographies always map candidate coordinates into reference
coordinates.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit
from scipy import sparse
from scipy.sparse.linalg import cg

from .exceptions import DegeneracyError, InsufficientDataError, NoRegistrationError, StitchError
from .correspond import CorrespondenceSet, project_points, reprojection_errors
from .image import Image, sample_bilinear_grid

log = logging.getLogger(__name__)

MAX_CANVAS_PIXELS = 64_000_000
LMEDS_SAMPLES = 256
MIN_SEED_PAIRS = 6

# screen() reason codes, in evaluation order
REASON_SIMILARITY = "similarity-deviation"
REASON_SCALE = "scale-range"
REASON_IDENTITY = "identity-overlap"
REASON_DIAGONAL = "short-diagonal"


class Homography:
    """A 3x3 projective map in canonical normalization.

    Normalized so the bottom-right entry is 1 when it is not tiny, otherwise
    to unit Frobenius norm with a deterministic sign. Two homographies
    representing the same projective map compare equal within 1e-9.
    """

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise DegeneracyError("homography has non-finite entries")
        norm = np.linalg.norm(m)
        if norm < 1e-12:
            raise DegeneracyError("homography is the zero matrix")
        if abs(m[2, 2]) > 1e-9 * norm:
            m = m / m[2, 2]
        else:
            m = m / norm
            flat = m.ravel()
            lead = flat[np.argmax(np.abs(flat))]
            if lead < 0:
                m = -m
        if abs(np.linalg.det(m)) <= 1e-9:
            raise DegeneracyError("homography is singular")
        m.setflags(write=False)
        self.matrix = m

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return project_points(self.matrix, points)

    def __eq__(self, other):
        if not isinstance(other, Homography):
            return NotImplemented
        return np.allclose(self.matrix, other.matrix, atol=1e-9)

    def __repr__(self):
        return f"Homography({self.matrix.tolist()})"

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))

    @staticmethod
    def translation(dx, dy) -> "Homography":
        return Homography([[1, 0, dx], [0, 1, dy], [0, 0, 1]])


@dataclass(frozen=True)
class RegistrationParams:
    """Frozen knobs for candidate generation, screening, and refinement.

    Radii are in pixels; `from_diagonal` derives the defaults that scale
    with input size (seed radius 15% of the reference diagonal, inlier
    growth radius 5%).
    """

    ransac_iters: int = 500
    seed_radius: float = 120.0
    inlier_threshold: float = 3.0
    growth_radius: float = 40.0
    dedup_threshold: float = 0.5
    max_registrations: int = 6
    sim_dev_max: float = 10.0
    scale_min: float = 0.5
    scale_max: float = 2.0
    overlap_identity_max: float = 0.95
    diag_min_frac: float = 0.5
    cpw_grid: int = 16
    cpw_data_weight: float = 1.0
    cpw_similarity_weight: float = 0.05

    def __post_init__(self):
        if self.ransac_iters <= 0 or self.seed_radius <= 0 or self.inlier_threshold <= 0:
            raise ValueError("ransac_iters, seed_radius, inlier_threshold must be positive")
        if self.growth_radius <= 0 or self.max_registrations <= 0 or self.cpw_grid <= 0:
            raise ValueError("growth_radius, max_registrations, cpw_grid must be positive")
        if not (0.0 < self.dedup_threshold <= 1.0):
            raise ValueError("dedup_threshold must be in (0, 1]")
        if not (0.0 < self.overlap_identity_max < 1.0):
            raise ValueError("overlap_identity_max must be in (0, 1)")
        if self.scale_min <= 0 or self.scale_max < self.scale_min:
            raise ValueError("scale range must satisfy 0 < scale_min <= scale_max")
        if self.sim_dev_max <= 0 or self.diag_min_frac <= 0:
            raise ValueError("sim_dev_max and diag_min_frac must be positive")
        if self.cpw_data_weight <= 0 or self.cpw_similarity_weight <= 0:
            raise ValueError("cpw weights must be positive")

    @staticmethod
    def from_diagonal(diagonal: float, **overrides) -> "RegistrationParams":
        base = RegistrationParams(seed_radius=0.15 * diagonal, growth_radius=0.05 * diagonal)
        return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class CanvasFrame:
    """Stitching canvas: reference pixel (x, y) sits at canvas (x+ox, y+oy)."""

    width: int
    height: int
    offset_x: int
    offset_y: int

    @property
    def offset(self):
        return np.array([self.offset_x, self.offset_y], dtype=np.float64)

    def ref_to_canvas(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) + self.offset


@dataclass
class WarpMesh:
    """Inverse warp mesh: a uniform grid over a canvas-space domain whose
    vertices store candidate-image coordinates."""

    x0: float
    y0: float
    cell_w: float
    cell_h: float
    verts: np.ndarray  # (G+1, G+1, 2), [row, col] -> (x, y) in candidate coords

    @property
    def grid(self) -> int:
        return self.verts.shape[0] - 1

    def sample(self, xs: np.ndarray, ys: np.ndarray):
        """Bilinear mesh interpolation at canvas coordinates.

        Returns candidate-space (sx, sy) and an inside-domain flag.
        """
        g = self.grid
        u = (np.asarray(xs, dtype=np.float64) - self.x0) / self.cell_w
        v = (np.asarray(ys, dtype=np.float64) - self.y0) / self.cell_h
        inside = (u >= 0) & (u <= g) & (v >= 0) & (v <= g)
        cu = np.clip(np.floor(u).astype(np.int64), 0, g - 1)
        cv = np.clip(np.floor(v).astype(np.int64), 0, g - 1)
        fu = np.clip(u - cu, 0.0, 1.0)
        fv = np.clip(v - cv, 0.0, 1.0)
        v00 = self.verts[cv, cu]
        v10 = self.verts[cv, cu + 1]
        v01 = self.verts[cv + 1, cu]
        v11 = self.verts[cv + 1, cu + 1]
        wx = fu[..., None]
        wy = fv[..., None]
        out = (v00 * (1 - wx) * (1 - wy) + v10 * wx * (1 - wy)
               + v01 * (1 - wx) * wy + v11 * wx * wy)
        return out[..., 0], out[..., 1], inside


@dataclass
class RansacCandidate:
    """One surviving RANSAC hypothesis before refinement."""

    homography: Homography
    seed_point: np.ndarray
    seed_indices: np.ndarray
    gen_index: int
    inlier_indices: np.ndarray = None


@dataclass
class CandidateRegistration:
    """A refined registration resampled onto the stitching canvas."""

    homography: Homography          # refined candidate->reference map
    inlier_indices: np.ndarray      # indices into the pipeline CorrespondenceSet
    seed_point: np.ndarray
    mesh: WarpMesh
    warped: Image
    gen_index: int = 0
    cpw_fallback: bool = False


@dataclass
class RegistrationStats:
    """Per-stage accounting: generated = screened_out + dedup_dropped + kept."""

    generated: int = 0
    screened_out: int = 0
    screen_reasons: dict = field(default_factory=dict)
    dedup_dropped: int = 0
    kept: int = 0
    skipped_iterations: int = 0

    def reconciles(self) -> bool:
        return self.generated == self.screened_out + self.dedup_dropped + self.kept


@dataclass
class RegistrationResult:
    registrations: list
    canvas: CanvasFrame
    stats: RegistrationStats


def _normalization_transform(points: np.ndarray) -> np.ndarray:
    center = points.mean(axis=0)
    spread = np.sqrt(((points - center) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(2.0) / max(spread, 1e-12)
    return np.array([[scale, 0.0, -scale * center[0]],
                     [0.0, scale, -scale * center[1]],
                     [0.0, 0.0, 1.0]])


def _dlt(xy_src: np.ndarray, xy_dst: np.ndarray):
    """Normalized DLT for the map src -> dst; returns a 3x3 array or None."""
    h = _dlt_batch(xy_src[None], xy_dst[None])[0]
    return None if np.any(np.isnan(h)) else h


def _dlt_batch(xy_src: np.ndarray, xy_dst: np.ndarray) -> np.ndarray:
    """Normalized DLT over a batch of point sets (S, k, 2) -> (S, 3, 3);
    degenerate samples come back as all-NaN matrices."""
    s_count, k, _ = xy_src.shape

    def norm_batch(pts):
        center = pts.mean(axis=1, keepdims=True)
        spread = np.sqrt(((pts - center) ** 2).sum(axis=2)).mean(axis=1)
        scale = np.sqrt(2.0) / np.maximum(spread, 1e-12)
        return (pts - center) * scale[:, None, None], center[:, 0], scale

    s, c_src, sc_src = norm_batch(xy_src)
    d, c_dst, sc_dst = norm_batch(xy_dst)

    a = np.zeros((s_count, 2 * k, 9))
    a[:, 0::2, 0] = -s[:, :, 0]
    a[:, 0::2, 1] = -s[:, :, 1]
    a[:, 0::2, 2] = -1.0
    a[:, 0::2, 6] = d[:, :, 0] * s[:, :, 0]
    a[:, 0::2, 7] = d[:, :, 0] * s[:, :, 1]
    a[:, 0::2, 8] = d[:, :, 0]
    a[:, 1::2, 3] = -s[:, :, 0]
    a[:, 1::2, 4] = -s[:, :, 1]
    a[:, 1::2, 5] = -1.0
    a[:, 1::2, 6] = d[:, :, 1] * s[:, :, 0]
    a[:, 1::2, 7] = d[:, :, 1] * s[:, :, 1]
    a[:, 1::2, 8] = d[:, :, 1]
    try:
        _, sv, vt = np.linalg.svd(a)
    except np.linalg.LinAlgError:
        return np.full((s_count, 3, 3), np.nan)
    hn = vt[:, -1].reshape(s_count, 3, 3)
    # rank < 8 means the sample does not determine a homography
    bad = sv[:, 6] < 1e-10

    # denormalize: H = inv(T_dst) @ Hn @ T_src, with the transforms analytic
    t_src = np.zeros((s_count, 3, 3))
    t_src[:, 0, 0] = t_src[:, 1, 1] = sc_src
    t_src[:, 0, 2] = -sc_src * c_src[:, 0]
    t_src[:, 1, 2] = -sc_src * c_src[:, 1]
    t_src[:, 2, 2] = 1.0
    t_dst_inv = np.zeros((s_count, 3, 3))
    t_dst_inv[:, 0, 0] = t_dst_inv[:, 1, 1] = 1.0 / sc_dst
    t_dst_inv[:, 0, 2] = c_dst[:, 0]
    t_dst_inv[:, 1, 2] = c_dst[:, 1]
    t_dst_inv[:, 2, 2] = 1.0
    h = t_dst_inv @ hn @ t_src
    bad |= np.abs(np.linalg.det(h)) <= 1e-12
    h[bad] = np.nan
    return h


_TRIPLES = np.asarray(list(itertools.combinations(range(4), 3)), dtype=np.int64)


def _collinear_mask(points: np.ndarray) -> np.ndarray:
    """True per sample of (S, 4, 2) when any 3 of the 4 points are collinear."""
    span = np.max(points.max(axis=1) - points.min(axis=1), axis=1)
    tol = 1e-6 * np.maximum(span, 1.0) ** 2
    tri = points[:, _TRIPLES]                      # (S, 4 triples, 3, 2)
    d1 = tri[:, :, 1] - tri[:, :, 0]
    d2 = tri[:, :, 2] - tri[:, :, 0]
    area2 = np.abs(d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])
    return np.any(area2 <= tol[:, None], axis=1)


def _has_collinear_triple(points: np.ndarray) -> bool:
    return bool(_collinear_mask(np.asarray(points, dtype=np.float64)[None])[0])


def estimate_homography_lmeds(pairs_or_xy0, xy1=None, rng=None) -> Homography:
    """Least-median-of-squares homography for the map xy1 -> xy0.

    Accepts a CorrespondenceSet, a sequence of Correspondence, or two
    (n, 2) point arrays. Draws 256 random 4-point minimal samples (all
    combinations when there are fewer), solves each by normalized DLT,
    keeps the hypothesis with the smallest median squared reprojection
    error, then re-fits by DLT on the pairs with error < 2.5 * sqrt(median).
    """
    if xy1 is None:
        if isinstance(pairs_or_xy0, CorrespondenceSet):
            xy0, xy1 = pairs_or_xy0.xy0, pairs_or_xy0.xy1
        else:
            xy0 = np.asarray([c.p0 for c in pairs_or_xy0], dtype=np.float64)
            xy1 = np.asarray([c.p1 for c in pairs_or_xy0], dtype=np.float64)
    else:
        xy0 = pairs_or_xy0
    xy0 = np.asarray(xy0, dtype=np.float64).reshape(-1, 2)
    xy1 = np.asarray(xy1, dtype=np.float64).reshape(-1, 2)
    n = len(xy0)
    if n < 4:
        raise InsufficientDataError(f"need at least 4 pairs, got {n}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng

    from math import comb
    exhaustive = comb(n, 4) <= LMEDS_SAMPLES

    hypotheses = []
    budget = 4 * LMEDS_SAMPLES
    want = comb(n, 4) if exhaustive else LMEDS_SAMPLES
    first_round = True
    while len(hypotheses) < want and budget > 0:
        if exhaustive:
            if not first_round:
                break
            samples = np.asarray(list(itertools.combinations(range(n), 4)), dtype=np.int64)
        else:
            draw = min(want - len(hypotheses), budget)
            samples = np.stack([rng.choice(n, size=4, replace=False) for _ in range(draw)])
        first_round = False
        budget -= len(samples)
        # drop collinear samples (random mode re-draws on the next pass)
        good = ~(_collinear_mask(xy0[samples]) | _collinear_mask(xy1[samples]))
        if not np.any(good):
            continue
        h_batch = _dlt_batch(xy1[samples[good]], xy0[samples[good]])
        valid = ~np.isnan(h_batch[:, 0, 0])
        hypotheses.extend(h_batch[valid])
    if not hypotheses:
        raise DegeneracyError("all minimal samples were degenerate")

    stack = np.stack(hypotheses)
    homog = np.column_stack([xy1, np.ones(n)])
    mapped = np.einsum("kij,nj->kni", stack, homog)
    w = mapped[:, :, 2]
    safe = np.abs(w) >= 1e-12
    sq_err = np.full((len(stack), n), 1e24)
    proj = np.where(safe[:, :, None], mapped[:, :, :2] / np.where(safe, w, 1.0)[:, :, None], 0.0)
    diff = proj - xy0[None, :, :]
    err = np.sum(diff * diff, axis=2)
    sq_err[safe] = err[safe]
    medians = np.median(sq_err, axis=1)
    best_idx = int(np.argmin(medians))
    best = stack[best_idx]
    med = medians[best_idx]

    inliers = np.flatnonzero(sq_err[best_idx] < 6.25 * med)
    if len(inliers) >= 4:
        refit = _dlt(xy1[inliers], xy0[inliers])
        if refit is not None:
            try:
                return Homography(refit)
            except DegeneracyError:
                pass
    return Homography(best)


def generate_candidates(cs: CorrespondenceSet, params: RegistrationParams,
                        rng_seed: int) -> list:
    """Locally-seeded hypothesis generation.

    Each iteration seeds at a random correspondence's reference point,
    gathers all correspondences within `seed_radius`, and fits an LMedS
    homography when at least 6 are gathered. Deterministic given rng_seed;
    iteration t draws from its own derived stream.
    """
    if len(cs) < 4:
        raise InsufficientDataError(f"need at least 4 correspondences, got {len(cs)}")
    tree = cKDTree(cs.xy0)
    out = []
    for t in range(params.ransac_iters):
        rng = np.random.default_rng([rng_seed, t])
        idx = int(rng.integers(len(cs)))
        seed = cs.xy0[idx]
        gathered = np.asarray(sorted(tree.query_ball_point(seed, params.seed_radius)),
                              dtype=np.int64)
        if len(gathered) < MIN_SEED_PAIRS:
            continue
        try:
            hom = estimate_homography_lmeds(cs.xy0[gathered], cs.xy1[gathered], rng)
        except (DegeneracyError, InsufficientDataError):
            continue
        out.append(RansacCandidate(hom, seed.copy(), gathered, t))
    return out


def _fit_similarity(xy_src: np.ndarray, xy_dst: np.ndarray) -> np.ndarray:
    """Least-squares similarity (scale+rotation+translation) src -> dst."""
    n = len(xy_src)
    a = np.zeros((2 * n, 4))
    a[0::2, 0] = xy_src[:, 0]
    a[0::2, 1] = -xy_src[:, 1]
    a[0::2, 2] = 1.0
    a[1::2, 0] = xy_src[:, 1]
    a[1::2, 1] = xy_src[:, 0]
    a[1::2, 3] = 1.0
    b = xy_dst.reshape(-1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    sa, sb, tx, ty = sol
    return np.array([[sa, -sb, tx], [sb, sa, ty], [0.0, 0.0, 1.0]])


def _signed_area(poly: np.ndarray) -> float:
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _convex_clip(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by a convex polygon.
    Returns the (possibly empty) intersection."""
    if _signed_area(clip) < 0:
        clip = clip[::-1]  # inside test below assumes a counterclockwise clip
    output = list(subject)
    m = len(clip)
    for i in range(m):
        a = clip[i]
        b = clip[(i + 1) % m]
        edge = b - a
        if not output:
            break
        inputs = output
        output = []
        prev = inputs[-1]
        prev_in = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0]) >= 0
        for cur in inputs:
            cur_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0
            if cur_in != prev_in:
                d = cur - prev
                denom = edge[0] * d[1] - edge[1] * d[0]
                if abs(denom) > 1e-12:
                    tpar = (edge[0] * (a[1] - prev[1]) - edge[1] * (a[0] - prev[0])) / denom
                    output.append(prev + tpar * d)
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.asarray(output, dtype=np.float64).reshape(-1, 2)


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _image_corners(size) -> np.ndarray:
    w, h = size
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def screen(hom: Homography, seed_xy0: np.ndarray, seed_xy1: np.ndarray,
           candidate_size, params: RegistrationParams):
    """Accept/reject a hypothesis; returns (accepted, reason-or-None).

    Rules in order: (a) deviation from the best similarity fit on the seed
    subset, (b) singular values of the upper-left 2x2 block outside the
    scale range, (c) footprint overlap with the untransformed image too
    close to identity, (d) either mapped diagonal shorter than
    diag_min_frac of the original diagonal.
    """
    m = hom.matrix
    seed_xy0 = np.asarray(seed_xy0, dtype=np.float64).reshape(-1, 2)
    seed_xy1 = np.asarray(seed_xy1, dtype=np.float64).reshape(-1, 2)

    sim = _fit_similarity(seed_xy1, seed_xy0)
    via_h = project_points(m, seed_xy1)
    via_sim = project_points(sim, seed_xy1)
    mean_dev = float(np.mean(np.linalg.norm(via_h - via_sim, axis=1)))
    if mean_dev > params.sim_dev_max:
        return False, REASON_SIMILARITY

    sv = np.linalg.svd(m[:2, :2], compute_uv=False)
    if sv.min() < params.scale_min or sv.max() > params.scale_max:
        return False, REASON_SCALE

    corners = _image_corners(candidate_size)
    homog = np.column_stack([corners, np.ones(4)])
    mapped_h = homog @ m.T
    if np.any(np.abs(mapped_h[:, 2]) < 1e-9):
        # footprint crosses the horizon: degenerate, mapped diagonals undefined
        return False, REASON_DIAGONAL
    mapped = mapped_h[:, :2] / mapped_h[:, 2:3]

    inter = _polygon_area(_convex_clip(mapped, corners))
    union = _polygon_area(corners) + _polygon_area(mapped) - inter
    if union > 0 and inter / union > params.overlap_identity_max:
        return False, REASON_IDENTITY

    orig_diag = np.linalg.norm([candidate_size[0], candidate_size[1]])
    d1 = np.linalg.norm(mapped[2] - mapped[0])
    d2 = np.linalg.norm(mapped[3] - mapped[1])
    if min(d1, d2) < params.diag_min_frac * orig_diag:
        return False, REASON_DIAGONAL

    return True, None


def inlier_set(hom: Homography, cs: CorrespondenceSet, seed_indices,
               params: RegistrationParams) -> np.ndarray:
    """Inlier indices grown from the seed subset to a fixpoint.

    Starts with seed pairs whose reprojection error is below the threshold,
    then repeatedly adds any sub-threshold correspondence whose reference
    point lies within the growth radius of a member. Order-independent.
    """
    errors = reprojection_errors(hom, cs)
    eligible = np.flatnonzero(errors < params.inlier_threshold)
    if len(eligible) == 0:
        return np.empty(0, dtype=np.int64)
    seed_indices = np.asarray(seed_indices, dtype=np.int64)
    in_d = np.zeros(len(cs), dtype=bool)
    in_d[np.intersect1d(seed_indices, eligible)] = True
    if not in_d.any():
        return np.empty(0, dtype=np.int64)

    tree = cKDTree(cs.xy0[eligible])
    eligible_mask = np.zeros(len(cs), dtype=bool)
    eligible_mask[eligible] = True
    frontier = np.flatnonzero(in_d)
    while len(frontier):
        neighbor_lists = tree.query_ball_point(cs.xy0[frontier], params.growth_radius)
        added = []
        for lst in neighbor_lists:
            for j in lst:
                gidx = eligible[j]
                if not in_d[gidx]:
                    in_d[gidx] = True
                    added.append(gidx)
        frontier = np.asarray(added, dtype=np.int64)
    return np.flatnonzero(in_d)


def similarity(d_a, d_b, universe_size: int) -> float:
    """Cosine of the 0-1 indicator vectors: |A & B| / sqrt(|A| |B|)."""
    if universe_size < 1:
        raise ValueError("universe size must be >= 1")
    a = np.asarray(d_a, dtype=np.int64)
    b = np.asarray(d_b, dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        return 0.0
    inter = len(np.intersect1d(a, b))
    return inter / np.sqrt(len(a) * len(b))


def deduplicate(candidates: list, universe_size: int,
                params: RegistrationParams) -> list:
    """Greedy dedup: consider candidates by descending inlier count (ties by
    generation order) and keep those dissimilar to everything kept so far."""
    order = sorted(range(len(candidates)),
                   key=lambda i: (-len(candidates[i].inlier_indices), candidates[i].gen_index))
    kept = []
    for i in order:
        cand = candidates[i]
        if len(kept) >= params.max_registrations:
            break
        if all(similarity(cand.inlier_indices, k.inlier_indices, universe_size)
               < params.dedup_threshold for k in kept):
            kept.append(cand)
    return kept


def smooth_inlier_objective(hom, cs: CorrespondenceSet, inlier_threshold: float) -> float:
    """Smoothed inlier count f(H) = sum of S(e_i), S(t) = 1 - 1/(1+exp(-(T-t))).

    S rewards small errors (S -> 1 as t -> 0), so refinement maximizes f.
    """
    if len(cs) == 0:
        return 0.0
    errors = reprojection_errors(hom, cs)
    return float(np.sum(expit(inlier_threshold - errors)))


def _lm_residuals(theta: np.ndarray, cs: CorrespondenceSet, thresh: float) -> np.ndarray:
    # 1 - S(e) = expit(e - thresh); minimizing sum of squares of
    # sqrt(expit(e - thresh)) maximizes f exactly.
    m = np.append(theta, 1.0).reshape(3, 3)
    errors = reprojection_errors(m, cs)
    return np.sqrt(expit(errors - thresh))


def refine_homography(hom: Homography, cs: CorrespondenceSet,
                      inlier_threshold: float, max_iters: int = 200) -> Homography:
    """Levenberg-Marquardt ascent of the smoothed inlier objective.

    Works on the 8 free parameters (bottom-right pinned to 1), numeric
    central-difference Jacobian with step 1e-6; only accepts steps that
    increase f, so f(result) >= f(input) always holds.
    """
    m = hom.matrix
    if abs(m[2, 2]) < 1e-9 or len(cs) == 0:
        return hom
    theta = (m / m[2, 2]).ravel()[:8].copy()
    r = _lm_residuals(theta, cs, inlier_threshold)
    cost = float(r @ r)
    mu = 1e-3
    step = 1e-6
    for _ in range(max_iters):
        jac = np.empty((len(r), 8))
        for j in range(8):
            tp = theta.copy()
            tp[j] += step
            tm = theta.copy()
            tm[j] -= step
            jac[:, j] = (_lm_residuals(tp, cs, inlier_threshold)
                         - _lm_residuals(tm, cs, inlier_threshold)) / (2 * step)
        grad = jac.T @ r
        hess = jac.T @ jac
        accepted = False
        delta_cost = 0.0
        while mu < 1e14:
            try:
                delta = np.linalg.solve(hess + mu * np.diag(np.diag(hess)) + 1e-12 * np.eye(8),
                                        -grad)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            trial = theta + delta
            trial_m = np.append(trial, 1.0).reshape(3, 3)
            if abs(np.linalg.det(trial_m)) <= 1e-9 or not np.all(np.isfinite(trial_m)):
                mu *= 10.0
                continue
            r_new = _lm_residuals(trial, cs, inlier_threshold)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                delta_cost = cost - cost_new
                theta, r, cost = trial, r_new, cost_new
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 10.0
        if not accepted or delta_cost < 1e-9:
            break
    return Homography(np.append(theta, 1.0).reshape(3, 3))


def mesh_from_homography(hom: Homography, canvas: CanvasFrame, candidate_size,
                         grid: int) -> WarpMesh:
    """Uniform mesh over the canvas footprint of H(candidate), initialized
    from the inverse homography."""
    corners = _image_corners(candidate_size)
    mapped = hom.apply(corners) + canvas.offset
    x_lo = max(0.0, float(mapped[:, 0].min()))
    x_hi = min(float(canvas.width), float(mapped[:, 0].max()))
    y_lo = max(0.0, float(mapped[:, 1].min()))
    y_hi = min(float(canvas.height), float(mapped[:, 1].max()))
    if x_hi <= x_lo or y_hi <= y_lo:
        raise DegeneracyError("warped footprint does not intersect the canvas")
    cell_w = (x_hi - x_lo) / grid
    cell_h = (y_hi - y_lo) / grid
    gx, gy = np.meshgrid(x_lo + cell_w * np.arange(grid + 1),
                         y_lo + cell_h * np.arange(grid + 1))
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1) - canvas.offset
    verts = hom.inverse().apply(pts).reshape(grid + 1, grid + 1, 2)
    return WarpMesh(x_lo, y_lo, cell_w, cell_h, verts)


def _corner_triangles(grid: int):
    """Per-quad corner triangles (center, horizontal neighbor, vertical
    neighbor) as index triples into the flattened vertex grid."""
    idx = np.arange((grid + 1) * (grid + 1)).reshape(grid + 1, grid + 1)
    tris = []
    for r in range(grid):
        for c in range(grid):
            v00, v10 = idx[r, c], idx[r, c + 1]
            v01, v11 = idx[r + 1, c], idx[r + 1, c + 1]
            tris.extend([(v00, v10, v01), (v10, v00, v11),
                         (v01, v11, v00), (v11, v01, v10)])
    return np.asarray(tris, dtype=np.int64)


def _quad_orientations(verts: np.ndarray) -> np.ndarray:
    """Signed z-cross of each quad's edge vectors; one value per quad."""
    a = verts[:-1, 1:] - verts[:-1, :-1]   # v00 -> v10
    b = verts[1:, :-1] - verts[:-1, :-1]   # v00 -> v01
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def cpw_refine(hom: Homography, inlier_xy0, inlier_xy1, canvas: CanvasFrame,
               candidate_size, params: RegistrationParams):
    """Content-preserving-warp refinement of the inverse mesh.

    Balances a data term (each inlier's reference position, expressed with
    the bilinear weights of its containing cell, must map to its candidate
    position) against local similarity preservation of every quad triangle.
    Solved as sparse linear least squares by conjugate gradient on the
    normal equations. On a degenerate output quad the unrefined mesh is
    returned with a warning flag.
    """
    grid = params.cpw_grid
    mesh0 = mesh_from_homography(hom, canvas, candidate_size, grid)
    inlier_xy0 = np.asarray(inlier_xy0, dtype=np.float64).reshape(-1, 2)
    inlier_xy1 = np.asarray(inlier_xy1, dtype=np.float64).reshape(-1, 2)
    if len(inlier_xy0) == 0:
        return mesh0, False

    orient0 = _quad_orientations(mesh0.verts)
    if np.any(np.abs(orient0) < 1e-12):
        log.warning("cpw: initial mesh has degenerate quads; keeping unrefined mesh")
        return mesh0, True

    nv = (grid + 1) * (grid + 1)
    verts0 = mesh0.verts.reshape(nv, 2)
    rows, cols, vals, rhs = [], [], [], []
    row = 0

    # data term
    canvas_pts = canvas.ref_to_canvas(inlier_xy0)
    u = (canvas_pts[:, 0] - mesh0.x0) / mesh0.cell_w
    v = (canvas_pts[:, 1] - mesh0.y0) / mesh0.cell_h
    ok = (u >= 0) & (u <= grid) & (v >= 0) & (v <= grid)
    sx, sy, _ = mesh0.sample(canvas_pts[:, 0], canvas_pts[:, 1])
    init_val = np.stack([sx, sy], axis=1)
    vert_idx = np.arange(nv).reshape(grid + 1, grid + 1)
    w_data = params.cpw_data_weight
    for k in np.flatnonzero(ok):
        cu = min(int(np.floor(u[k])), grid - 1)
        cv = min(int(np.floor(v[k])), grid - 1)
        fu = u[k] - cu
        fv = v[k] - cv
        weights = ((vert_idx[cv, cu], (1 - fu) * (1 - fv)),
                   (vert_idx[cv, cu + 1], fu * (1 - fv)),
                   (vert_idx[cv + 1, cu], (1 - fu) * fv),
                   (vert_idx[cv + 1, cu + 1], fu * fv))
        for comp in (0, 1):
            for vid, wgt in weights:
                rows.append(row)
                cols.append(2 * vid + comp)
                vals.append(w_data * wgt)
            rhs.append(w_data * (inlier_xy1[k, comp] - init_val[k, comp]))
            row += 1

    # similarity term: each corner triangle keeps its initial local coordinates
    w_sim = params.cpw_similarity_weight
    for vc, va, vb in _corner_triangles(grid):
        d = verts0[vb] - verts0[va]
        den = float(d @ d)
        e = verts0[vc] - verts0[va]
        uu = float(d @ e) / den
        vv = float(-d[1] * e[0] + d[0] * e[1]) / den
        # rows impose Vc - Va - uu*(Vb-Va) - vv*R(Vb-Va) = 0 on the solved verts
        coeffs_x = ((2 * vc + 0, 1.0), (2 * va + 0, -1.0 + uu), (2 * vb + 0, -uu),
                    (2 * va + 1, -vv), (2 * vb + 1, vv))
        coeffs_y = ((2 * vc + 1, 1.0), (2 * va + 1, -1.0 + uu), (2 * vb + 1, -uu),
                    (2 * va + 0, vv), (2 * vb + 0, -vv))
        for coeffs in (coeffs_x, coeffs_y):
            for cidx, cval in coeffs:
                rows.append(row)
                cols.append(cidx)
                vals.append(w_sim * cval)
            rhs.append(0.0)
            row += 1

    a = sparse.csr_matrix((vals, (rows, cols)), shape=(row, 2 * nv))
    b = np.asarray(rhs)
    normal = (a.T @ a).tocsr()
    atb = a.T @ b
    delta, info = cg(normal, atb, rtol=1e-8, atol=0.0, maxiter=4000)
    if info != 0:
        log.warning("cpw: conjugate gradient did not fully converge (info=%d)", info)
    new_verts = (verts0 + delta.reshape(nv, 2)).reshape(grid + 1, grid + 1, 2)

    orient = _quad_orientations(new_verts)
    if np.any(np.sign(orient) != np.sign(orient0)) or np.any(np.abs(orient) < 1e-12):
        log.warning("cpw: refinement produced a degenerate quad; keeping unrefined mesh")
        return mesh0, True
    return WarpMesh(mesh0.x0, mesh0.y0, mesh0.cell_w, mesh0.cell_h, new_verts), False


def warp_image(i1: Image, mesh: WarpMesh, canvas: CanvasFrame) -> Image:
    """Inverse warp: every canvas pixel samples the candidate image through
    the mesh; the mask is false wherever sampling leaves the candidate."""
    xs, ys = np.meshgrid(np.arange(canvas.width, dtype=np.float64),
                         np.arange(canvas.height, dtype=np.float64))
    sx, sy, inside = mesh.sample(xs, ys)
    colors, valid = sample_bilinear_grid(i1.pixels, i1.mask, sx, sy)
    mask = inside & valid
    colors[~mask] = 0.0
    return Image(colors, mask)


def compute_canvas(ref_size, candidate_size, homographies) -> CanvasFrame:
    """Union bounding box of the reference and every warped candidate
    footprint, with the reference placed at an integer offset."""
    w0, h0 = ref_size
    xs = [0.0, float(w0)]
    ys = [0.0, float(h0)]
    corners = _image_corners(candidate_size)
    for hom in homographies:
        mapped = hom.apply(corners)
        xs.extend(mapped[:, 0])
        ys.extend(mapped[:, 1])
    snap = 1e-6  # ignore sub-micro-pixel float noise in the refined corners
    x_lo = int(np.floor(min(xs) + snap))
    y_lo = int(np.floor(min(ys) + snap))
    x_hi = int(np.ceil(max(xs) - snap))
    y_hi = int(np.ceil(max(ys) - snap))
    width = x_hi - x_lo
    height = y_hi - y_lo
    if width * height > MAX_CANVAS_PIXELS:
        raise StitchError(f"canvas {width}x{height} exceeds the safety limit")
    return CanvasFrame(width, height, -x_lo, -y_lo)


def build_registrations(i0: Image, i1: Image, cs: CorrespondenceSet,
                        params: RegistrationParams, rng_seed: int) -> RegistrationResult:
    """Full registration stage: generate, screen, deduplicate, refine, warp.

    Returns 1..max_registrations candidate registrations on a shared canvas,
    each with inliers recomputed against the refined homography. Raises
    NoRegistrationError (with per-stage counts) when nothing survives.
    """
    stats = RegistrationStats()
    hypotheses = generate_candidates(cs, params, rng_seed)
    stats.generated = len(hypotheses)
    stats.skipped_iterations = params.ransac_iters - len(hypotheses)

    survivors = []
    for cand in hypotheses:
        ok, reason = screen(cand.homography, cs.xy0[cand.seed_indices],
                            cs.xy1[cand.seed_indices], (i1.width, i1.height), params)
        if not ok:
            stats.screened_out += 1
            stats.screen_reasons[reason] = stats.screen_reasons.get(reason, 0) + 1
            continue
        cand.inlier_indices = inlier_set(cand.homography, cs, cand.seed_indices, params)
        if len(cand.inlier_indices) == 0:
            stats.dedup_dropped += 1
            continue
        survivors.append(cand)

    kept = deduplicate(survivors, len(cs), params)
    stats.dedup_dropped += len(survivors) - len(kept)

    refined = []
    for cand in kept:
        f_before = smooth_inlier_objective(cand.homography, cs, params.inlier_threshold)
        hom = refine_homography(cand.homography, cs, params.inlier_threshold)
        f_after = smooth_inlier_objective(hom, cs, params.inlier_threshold)
        if f_after < f_before - 1e-9:
            raise StitchError(
                f"refinement decreased the smoothed inlier objective "
                f"({f_before:.9f} -> {f_after:.9f})")
        inliers = inlier_set(hom, cs, cand.seed_indices, params)
        if len(inliers) == 0:
            stats.dedup_dropped += 1
            continue
        refined.append(RansacCandidate(hom, cand.seed_point, cand.seed_indices,
                                       cand.gen_index, inliers))

    # refinement can make distinct hypotheses converge onto the same motion;
    # dedup again on the recomputed inlier sets so kept registrations stay
    # pairwise dissimilar
    final = deduplicate(refined, len(cs), params)
    stats.dedup_dropped += len(refined) - len(final)
    refined = [(cand, cand.homography, cand.inlier_indices) for cand in final]

    if not refined:
        stats.kept = 0
        raise NoRegistrationError(
            f"no registration survived (generated={stats.generated}, "
            f"screened_out={stats.screened_out}, reasons={stats.screen_reasons}, "
            f"dropped={stats.dedup_dropped})", stats)

    canvas = compute_canvas((i0.width, i0.height), (i1.width, i1.height),
                            [hom for _, hom, _ in refined])

    registrations = []
    for cand, hom, inliers in refined:
        mesh, fallback = cpw_refine(hom, cs.xy0[inliers], cs.xy1[inliers], canvas,
                                    (i1.width, i1.height), params)
        warped = warp_image(i1, mesh, canvas)
        registrations.append(CandidateRegistration(
            homography=hom,
            inlier_indices=inliers,
            seed_point=cand.seed_point,
            mesh=mesh,
            warped=warped,
            gen_index=cand.gen_index,
            cpw_fallback=fallback,
        ))
    stats.kept = len(registrations)
    return RegistrationResult(registrations, canvas, stats)

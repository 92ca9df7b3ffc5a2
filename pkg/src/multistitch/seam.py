"""Multi-label seam-finding energy over the stitching canvas.

Label 0 draws a pixel from the reference; label i >= 1 draws it from warped
candidate i. The energy is the sum of a mask data term, a warp-confidence
data term, seam smoothness terms (color, edge, Potts), and a sparse
duplication-avoidance term connecting possibly distant pixel pairs.

`StitchProblem` is the image-level description; `build_energy_terms`
compiles it into dense per-label planes plus a merged duplication edge
list, which is what the optimizer and the oracles consume. Tests may build
`EnergyTerms` directly to inject arbitrary unaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import SizeError
from .image import Image, masked_gradient_magnitude, to_grayscale
from .registration import CanvasFrame

BRUTE_FORCE_LIMIT = 10_000_000


@dataclass(frozen=True)
class EnergyParams:
    """Seam energy weights and radii. Defaults are the frozen configuration
    every acceptance scene runs with."""

    mask_penalty: float = 1e4          # charged outside the relevant mask(s)
    warp_weight: float = 100.0         # scales the normalized warp score in [-1, 1]
    color_mix: float = 0.05            # color-vs-motion mix inside the warp score
    seam_color_weight: float = 1.0
    seam_edge_weight: float = 0.5
    potts_weight: float = 5.0
    duplication_weight: float = 500.0
    patch_radius: int = 3              # color-quality patch radius (px)
    duplication_radius: int = 5        # duplication box radius (px)
    sigma_motion: float = 2.5          # Gaussian width for inlier confidence
    sigma_duplication: float = 2.5     # Gaussian width for duplication reweighting
    truncation: str = "clamp"          # non-submodular move terms: clamp | strict

    def __post_init__(self):
        lambdas = (self.mask_penalty, self.warp_weight, self.color_mix,
                   self.seam_color_weight, self.seam_edge_weight,
                   self.potts_weight, self.duplication_weight)
        if any(v < 0 for v in lambdas):
            raise ValueError("energy weights must be nonnegative")
        if self.patch_radius < 0 or self.duplication_radius < 0:
            raise ValueError("radii must be nonnegative")
        if self.sigma_motion <= 0 or self.sigma_duplication <= 0:
            raise ValueError("Gaussian widths must be positive")
        if self.truncation not in ("clamp", "strict"):
            raise ValueError("truncation must be 'clamp' or 'strict'")


@dataclass(frozen=True)
class DuplicationEdge:
    """One merged duplication condition: charged iff x[a] = 0 and x[b] = i."""

    a: tuple
    b: tuple
    candidate: int
    weight: float


@dataclass
class StitchProblem:
    """The seam-finding MRF instance.

    sources[0] is the reference laid out on the canvas; sources[i] is warped
    candidate i. `inlier_points[i-1]` holds canvas positions of candidate
    i's inliers (feeds motion quality). `dup_pairs[i-1]` holds integer
    canvas pixel pairs (p from the reference frame, q where candidate i
    renders the same scene point) for the duplication term.
    """

    canvas: CanvasFrame
    sources: list
    inlier_points: list
    dup_pairs: list
    params: EnergyParams = field(default_factory=EnergyParams)
    _terms: "EnergyTerms" = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.sources) < 2:
            raise ValueError("need the reference plus at least one candidate")
        shape = self.sources[0].shape
        for src in self.sources:
            if src.shape != shape:
                raise ValueError("all sources must share the canvas dimensions")
        n = len(self.sources) - 1
        if len(self.inlier_points) != n or len(self.dup_pairs) != n:
            raise ValueError("need one inlier list and one pair list per candidate")

    @property
    def n_labels(self) -> int:
        return len(self.sources)

    @property
    def shape(self):
        return self.sources[0].shape


@dataclass
class EnergyTerms:
    """Compiled energy: dense per-label planes plus merged duplication edges.

    `color_diff[(a, b)]` (a < b) is the per-pixel RGB distance between
    sources a and b, zero wherever either mask is invalid.
    """

    shape: tuple
    unary_mask: np.ndarray   # (L, H*W)
    unary_warp: np.ndarray   # (L, H*W)
    color_diff: dict
    grad: np.ndarray         # (L, H*W)
    params: EnergyParams
    dup_a: np.ndarray = None        # flat pixel indices
    dup_b: np.ndarray = None
    dup_label: np.ndarray = None
    dup_weight: np.ndarray = None

    def __post_init__(self):
        hw = self.shape[0] * self.shape[1]
        if self.unary_mask.shape != self.unary_warp.shape or self.unary_mask.shape[1] != hw:
            raise ValueError("unary plane shapes are inconsistent")
        if self.dup_a is None:
            self.dup_a = np.empty(0, dtype=np.int64)
            self.dup_b = np.empty(0, dtype=np.int64)
            self.dup_label = np.empty(0, dtype=np.int64)
            self.dup_weight = np.empty(0, dtype=np.float64)

    @property
    def n_labels(self) -> int:
        return self.unary_mask.shape[0]

    @property
    def unary(self) -> np.ndarray:
        return self.unary_mask + self.unary_warp

    def pair_diff(self, labels_a, labels_b, flat_idx) -> np.ndarray:
        """Color distance between sources labels_a and labels_b at pixels
        flat_idx; zero where the labels agree."""
        labels_a = np.asarray(labels_a)
        labels_b = np.asarray(labels_b)
        flat_idx = np.asarray(flat_idx)
        out = np.zeros(flat_idx.shape, dtype=np.float64)
        lo = np.minimum(labels_a, labels_b)
        hi = np.maximum(labels_a, labels_b)
        for (a, b), plane in self.color_diff.items():
            sel = (lo == a) & (hi == b)
            if np.any(sel):
                out[sel] = plane[flat_idx[sel]]
        return out


@dataclass
class EnergyBreakdown:
    """Component-wise energy of a labeling."""

    mask: float
    warp: float
    smoothness: float
    duplication: float
    duplication_satisfied: int

    @property
    def total(self) -> float:
        return self.mask + self.warp + self.smoothness + self.duplication

    def __str__(self):
        return (f"E_m={self.mask:.6f} E_w={self.warp:.6f} E_s={self.smoothness:.6f} "
                f"E_d={self.duplication:.6f} total={self.total:.6f}")


def disc_offsets(radius: int) -> np.ndarray:
    """Integer offsets with Euclidean norm <= radius, in scan order."""
    r = int(radius)
    out = [(dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
           if dx * dx + dy * dy <= r * r]
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def _disc_sum(plane: np.ndarray, radius: int) -> np.ndarray:
    h, w = plane.shape
    r = int(radius)
    padded = np.pad(plane, r)
    out = np.zeros_like(plane)
    for dx, dy in disc_offsets(radius):
        out += padded[r + dy:r + dy + h, r + dx:r + dx + w]
    return out


# --- scalar reference semantics (the vectorized planes must match these) ---

def mask_term(p, label: int, problem: StitchProblem) -> float:
    """Mask data term at pixel p = (x, y): reference label pays for leaving
    the reference mask; any candidate label pays for leaving the
    intersection of all candidate masks. Soft constraint, never infinite."""
    x, y = int(p[0]), int(p[1])
    lam = problem.params.mask_penalty
    if label == 0:
        return lam * (1.0 - float(problem.sources[0].mask[y, x]))
    prod = 1.0
    for src in problem.sources[1:]:
        prod *= float(src.mask[y, x])
    return lam * (1.0 - prod)


def motion_quality(p, inlier_points, sigma: float) -> float:
    """Sum of unnormalized Gaussians over inliers, truncated at 3 sigma."""
    pts = np.asarray(inlier_points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    d2 = np.sum((pts - np.asarray(p, dtype=np.float64)) ** 2, axis=1)
    cutoff = (3.0 * sigma) ** 2
    kept = d2[d2 <= cutoff]
    return float(np.sum(np.exp(-kept / (2.0 * sigma * sigma))))


def color_quality(p, candidate: int, problem: StitchProblem) -> float:
    """Mean RGB distance between the reference and candidate over the patch
    around p, skipping pixels invalid in either source; 0 if none valid."""
    x, y = int(p[0]), int(p[1])
    h, w = problem.shape
    ref = problem.sources[0]
    cand = problem.sources[candidate]
    total = 0.0
    count = 0
    for dx, dy in disc_offsets(problem.params.patch_radius):
        qx, qy = x + dx, y + dy
        if not (0 <= qx < w and 0 <= qy < h):
            continue
        if not (ref.mask[qy, qx] and cand.mask[qy, qx]):
            continue
        total += float(np.linalg.norm(ref.pixels[qy, qx] - cand.pixels[qy, qx]))
        count += 1
    return total / count if count else 0.0


def smoothness_term(p, q, label_p: int, label_q: int, problem: StitchProblem) -> float:
    """Seam cost between 4-adjacent pixels p and q: color difference at both
    endpoints, averaged edge strength, and a Potts constant. Masked pixels
    contribute color/gradient 0 (the mask term already charges them)."""
    if label_p == label_q:
        return 0.0
    terms = build_energy_terms(problem)
    h, w = problem.shape
    fp = int(p[1]) * w + int(p[0])
    fq = int(q[1]) * w + int(q[0])
    par = problem.params
    color = (terms.pair_diff([label_p], [label_q], [fp])[0]
             + terms.pair_diff([label_p], [label_q], [fq])[0])
    edge = 0.5 * (terms.grad[label_p, fp] + terms.grad[label_q, fq])
    return par.seam_color_weight * color + par.seam_edge_weight * edge + par.potts_weight


# --- compiled planes ---

def _motion_quality_plane(shape, inlier_points, sigma: float) -> np.ndarray:
    h, w = shape
    out = np.zeros((h, w), dtype=np.float64)
    rad = 3.0 * sigma
    for x, y in np.asarray(inlier_points, dtype=np.float64).reshape(-1, 2):
        x_lo = max(0, int(np.ceil(x - rad)))
        x_hi = min(w - 1, int(np.floor(x + rad)))
        y_lo = max(0, int(np.ceil(y - rad)))
        y_hi = min(h - 1, int(np.floor(y + rad)))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        xs = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        ys = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        d2 = (xs[None, :] - x) ** 2 + (ys[:, None] - y) ** 2
        stamp = np.where(d2 <= rad * rad, np.exp(-d2 / (2.0 * sigma * sigma)), 0.0)
        out[y_lo:y_hi + 1, x_lo:x_hi + 1] += stamp
    return out


def warp_term(problem: StitchProblem):
    """Per-candidate normalized warp scores in [-1, 1] (zero outside the
    candidate's mask, and identically zero when the raw score is constant)."""
    par = problem.params
    h, w = problem.shape
    ref = problem.sources[0]
    normalized = []
    for i, src in enumerate(problem.sources[1:], start=1):
        both = ref.mask & src.mask
        diff = np.where(both, np.linalg.norm(ref.pixels - src.pixels, axis=2), 0.0)
        numer = _disc_sum(diff, par.patch_radius)
        denom = _disc_sum(both.astype(np.float64), par.patch_radius)
        q_c = np.divide(numer, denom, out=np.zeros((h, w)), where=denom > 0)
        q_m = _motion_quality_plane((h, w), problem.inlier_points[i - 1], par.sigma_motion)
        raw = -q_m + par.color_mix * q_c
        valid = src.mask
        if valid.any():
            lo = raw[valid].min()
            hi = raw[valid].max()
        else:
            lo = hi = 0.0
        if hi - lo < 1e-12:
            scaled = np.zeros((h, w))
        else:
            scaled = (raw - lo) * (2.0 / (hi - lo)) - 1.0
        normalized.append(np.where(valid, scaled, 0.0))
    return normalized


def build_duplication_edges(problem: StitchProblem):
    """Expand every correspondence pair over the duplication box, drop
    off-canvas endpoints and self-loops, and merge duplicate (a, b, i)
    conditions by summing their Gaussian-reweighted weights."""
    par = problem.params
    h, w = problem.shape
    offsets = disc_offsets(par.duplication_radius)
    gauss = par.duplication_weight * np.exp(
        -np.sum(offsets.astype(np.float64) ** 2, axis=1) / (2.0 * par.sigma_duplication ** 2))

    keys = []
    weights = []
    for i, (p_px, q_px) in enumerate(problem.dup_pairs, start=1):
        p_px = np.asarray(p_px, dtype=np.int64).reshape(-1, 2)
        q_px = np.asarray(q_px, dtype=np.int64).reshape(-1, 2)
        for (dx, dy), wgt in zip(offsets, gauss):
            a = p_px + (dx, dy)
            b = q_px + (dx, dy)
            ok = ((a[:, 0] >= 0) & (a[:, 0] < w) & (a[:, 1] >= 0) & (a[:, 1] < h)
                  & (b[:, 0] >= 0) & (b[:, 0] < w) & (b[:, 1] >= 0) & (b[:, 1] < h))
            a_flat = a[ok, 1] * w + a[ok, 0]
            b_flat = b[ok, 1] * w + b[ok, 0]
            distinct = a_flat != b_flat
            a_flat = a_flat[distinct]
            b_flat = b_flat[distinct]
            keys.append((np.int64(i) * h * w + a_flat) * (h * w) + b_flat)
            weights.append(np.full(len(a_flat), wgt))
    if not keys:
        return [], (np.empty(0, np.int64),) * 3 + (np.empty(0, np.float64),)
    key_arr = np.concatenate(keys)
    weight_arr = np.concatenate(weights)
    uniq, inverse = np.unique(key_arr, return_inverse=True)
    merged_w = np.bincount(inverse, weights=weight_arr, minlength=len(uniq))
    b_flat = uniq % (h * w)
    rest = uniq // (h * w)
    a_flat = rest % (h * w)
    labels = rest // (h * w)
    edges = [DuplicationEdge((int(a % w), int(a // w)), (int(b % w), int(b // w)),
                             int(i), float(wt))
             for a, b, i, wt in zip(a_flat, b_flat, labels, merged_w)]
    return edges, (a_flat, b_flat, labels.astype(np.int64), merged_w.astype(np.float64))


def build_energy_terms(problem: StitchProblem) -> EnergyTerms:
    """Compile a StitchProblem into dense planes + merged duplication edges.
    Cached on the problem."""
    if problem._terms is not None:
        return problem._terms
    par = problem.params
    h, w = problem.shape
    hw = h * w
    n_labels = problem.n_labels

    masks = np.stack([src.mask for src in problem.sources]).reshape(n_labels, hw)
    unary_mask = np.empty((n_labels, hw))
    unary_mask[0] = par.mask_penalty * (1.0 - masks[0])
    inter = np.all(masks[1:], axis=0)
    unary_mask[1:] = par.mask_penalty * (1.0 - inter)

    unary_warp = np.zeros((n_labels, hw))
    for i, scaled in enumerate(warp_term(problem), start=1):
        unary_warp[i] = par.warp_weight * scaled.reshape(hw)

    grad = np.empty((n_labels, hw))
    for i, src in enumerate(problem.sources):
        grad[i] = masked_gradient_magnitude(to_grayscale(src), src.mask).reshape(hw)

    color_diff = {}
    pix = [src.pixels for src in problem.sources]
    for a in range(n_labels):
        for b in range(a + 1, n_labels):
            both = problem.sources[a].mask & problem.sources[b].mask
            d = np.where(both, np.linalg.norm(pix[a] - pix[b], axis=2), 0.0)
            color_diff[(a, b)] = d.reshape(hw)

    _, (dup_a, dup_b, dup_label, dup_weight) = build_duplication_edges(problem)
    terms = EnergyTerms(
        shape=(h, w),
        unary_mask=unary_mask,
        unary_warp=unary_warp,
        color_diff=color_diff,
        grad=grad,
        params=par,
        dup_a=dup_a,
        dup_b=dup_b,
        dup_label=dup_label,
        dup_weight=dup_weight,
    )
    problem._terms = terms
    return terms


def ensure_terms(problem_or_terms) -> EnergyTerms:
    if isinstance(problem_or_terms, EnergyTerms):
        return problem_or_terms
    return build_energy_terms(problem_or_terms)


def neighbor_pairs(shape):
    """Flat indices of 4-adjacent pixel pairs, horizontal then vertical."""
    h, w = shape
    idx = np.arange(h * w).reshape(h, w)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.concatenate([horiz, vert], axis=0)


def pairwise_costs(terms: EnergyTerms, labels_p, labels_q, flat_p, flat_q) -> np.ndarray:
    """Vectorized smoothness cost for label assignments across pixel pairs."""
    flat_p = np.asarray(flat_p)
    flat_q = np.asarray(flat_q)
    labels_p = np.broadcast_to(np.asarray(labels_p), flat_p.shape)
    labels_q = np.broadcast_to(np.asarray(labels_q), flat_q.shape)
    par = terms.params
    out = np.zeros(flat_p.shape, dtype=np.float64)
    differ = labels_p != labels_q
    if not np.any(differ):
        return out
    lp = labels_p[differ]
    lq = labels_q[differ]
    fp = flat_p[differ]
    fq = flat_q[differ]
    color = terms.pair_diff(lp, lq, fp) + terms.pair_diff(lp, lq, fq)
    edge = 0.5 * (terms.grad[lp, fp] + terms.grad[lq, fq])
    out[differ] = (par.seam_color_weight * color + par.seam_edge_weight * edge
                   + par.potts_weight)
    return out


def total_energy(labeling: np.ndarray, problem_or_terms) -> EnergyBreakdown:
    """Exact energy of a labeling with its per-component breakdown."""
    terms = ensure_terms(problem_or_terms)
    h, w = terms.shape
    x = np.asarray(labeling, dtype=np.int64).reshape(h * w)
    if x.min() < 0 or x.max() >= terms.n_labels:
        raise ValueError("labeling contains out-of-range labels")
    all_px = np.arange(h * w)
    e_mask = float(terms.unary_mask[x, all_px].sum())
    e_warp = float(terms.unary_warp[x, all_px].sum())
    pairs = neighbor_pairs((h, w))
    e_smooth = float(pairwise_costs(terms, x[pairs[:, 0]], x[pairs[:, 1]],
                                    pairs[:, 0], pairs[:, 1]).sum())
    satisfied = (x[terms.dup_a] == 0) & (x[terms.dup_b] == terms.dup_label)
    e_dup = float(terms.dup_weight[satisfied].sum())
    return EnergyBreakdown(e_mask, e_warp, e_smooth, e_dup, int(satisfied.sum()))


def brute_force_minimize(problem_or_terms) -> np.ndarray:
    """Exhaustive global minimum labeling (ties resolve to the
    lexicographically smallest labeling). Only for tiny instances."""
    terms = ensure_terms(problem_or_terms)
    h, w = terms.shape
    n_px = h * w
    n_labels = terms.n_labels
    total = n_labels ** n_px
    if total > BRUTE_FORCE_LIMIT:
        raise SizeError(f"{n_labels}^{n_px} labelings exceed the enumeration limit")

    pairs = neighbor_pairs((h, w))
    all_px = np.arange(n_px)
    unary = terms.unary
    place = n_labels ** np.arange(n_px - 1, -1, -1, dtype=np.int64)

    best_energy = np.inf
    best_labeling = None
    chunk = 65536
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        labs = (idx[:, None] // place[None, :]) % n_labels
        energy = unary[labs, all_px[None, :]].sum(axis=1)
        for p, q in pairs:
            energy += pairwise_costs(terms, labs[:, p], labs[:, q],
                                     np.full(len(idx), p), np.full(len(idx), q))
        for a, b, lab, wgt in zip(terms.dup_a, terms.dup_b, terms.dup_label,
                                  terms.dup_weight):
            energy += wgt * ((labs[:, a] == 0) & (labs[:, b] == lab))
        k = int(np.argmin(energy))
        if energy[k] < best_energy:
            best_energy = float(energy[k])
            best_labeling = labs[k].copy()
    return best_labeling.reshape(h, w)


def composite(labeling: np.ndarray, problem: StitchProblem) -> Image:
    """Copy each pixel from its labeled source; the output mask is the
    chosen source's mask."""
    h, w = problem.shape
    x = np.asarray(labeling, dtype=np.int64).reshape(h, w)
    pixels = np.stack([src.pixels for src in problem.sources])
    masks = np.stack([src.mask for src in problem.sources])
    rows, cols = np.indices((h, w))
    return Image(pixels[x, rows, cols], masks[x, rows, cols])

"""Gradient-domain (Poisson) blending of the labeled composite.

Reference-labeled pixels form the Dirichlet boundary (the reference anchors
the panorama's colors); every other valid pixel is free. The guidance field
copies each source's own gradients and averages the two sources' gradients
across a seam. Each RGB channel solves an independent discrete Poisson
equation by plain conjugate gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg

from .exceptions import EmptyProblemError
from .image import Image

CG_RTOL = 1e-6
CG_MAXITER = 10_000
_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class BlendProblem:
    """Discrete Poisson instance on the canvas grid.

    guidance_x[y, x] is the target gradient from (x, y) to (x+1, y);
    guidance_y[y, x] from (x, y) to (x, y+1); both per RGB channel.
    Pixels neither free nor Dirichlet are excluded from the system.
    """

    fixed: np.ndarray       # (H, W, 3) values; Dirichlet pixels are read from here
    dirichlet: np.ndarray   # (H, W) bool
    free: np.ndarray        # (H, W) bool
    guidance_x: np.ndarray  # (H, W-1, 3)
    guidance_y: np.ndarray  # (H-1, W, 3)


@dataclass
class BlendStats:
    """Solver outcome per channel plus pass-through accounting."""

    residuals: list = field(default_factory=list)   # relative residual per channel
    iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    passthrough_components: int = 0
    warnings: list = field(default_factory=list)


def build_guidance(composite: Image, labels: np.ndarray, sources: list) -> BlendProblem:
    """Guidance gradients from the labeled sources.

    Same-label neighbor pairs use that source's gradient; pairs straddling a
    seam average the two sources' gradients. Gradients are only taken where
    the source is valid at both endpoints, so they never straddle a mask
    boundary.
    """
    h, w = composite.shape
    x = np.asarray(labels, dtype=np.int64).reshape(h, w)
    pix = np.stack([s.pixels for s in sources])
    msk = np.stack([s.mask for s in sources])
    rows, cols = np.indices((h, w))

    chosen_valid = msk[x, rows, cols]
    dirichlet = (x == 0) & chosen_valid
    free = chosen_valid & ~dirichlet
    if not (dirichlet.any() or free.any()):
        raise EmptyProblemError("no valid pixels to blend")

    def directional(slice_p, slice_n):
        lp = x[slice_p]
        ln = x[slice_n]
        rp, cp = rows[slice_p], cols[slice_p]
        rn, cn = rows[slice_n], cols[slice_n]
        gp = pix[lp, rn, cn] - pix[lp, rp, cp]
        vp = msk[lp, rn, cn] & msk[lp, rp, cp]
        gn = pix[ln, rn, cn] - pix[ln, rp, cp]
        vn = msk[ln, rn, cn] & msk[ln, rp, cp]
        same = lp == ln
        g_same = np.where(vp[..., None], gp, 0.0)
        denom = vp.astype(np.float64) + vn.astype(np.float64)
        g_mixed = np.where((denom > 0)[..., None],
                           (gp * vp[..., None] + gn * vn[..., None])
                           / np.maximum(denom, 1.0)[..., None],
                           0.0)
        return np.where(same[..., None], g_same, g_mixed)

    guidance_x = directional(np.s_[:, :-1], np.s_[:, 1:])
    guidance_y = directional(np.s_[:-1, :], np.s_[1:, :])
    return BlendProblem(composite.pixels.copy(), dirichlet, free, guidance_x, guidance_y)


def solve_poisson(problem: BlendProblem):
    """Solve the Poisson system per channel; returns (Image, BlendStats).

    Free components with no Dirichlet neighbor pass through unblended with
    a warning. Results are clamped to [0, 255] only at the end; Dirichlet
    pixels are bit-identical to their fixed values.
    """
    h, w = problem.free.shape
    stats = BlendStats()
    out = problem.fixed.copy()
    out[problem.dirichlet] = problem.fixed[problem.dirichlet]

    labels_cc, n_cc = ndimage.label(problem.free, structure=_FOUR_CONN)
    dil = ndimage.binary_dilation(problem.dirichlet, structure=_FOUR_CONN)
    solvable = problem.free.copy()
    for comp in range(1, n_cc + 1):
        comp_mask = labels_cc == comp
        if not np.any(comp_mask & dil):
            solvable[comp_mask] = False
            stats.passthrough_components += 1
            stats.warnings.append(
                f"free component of {int(comp_mask.sum())} px has no boundary; passed through")
    if not solvable.any():
        mask_out = problem.dirichlet | problem.free
        return Image(np.where(mask_out[..., None], out, 0.0), mask_out), stats

    idx = -np.ones((h, w), dtype=np.int64)
    free_rows, free_cols = np.nonzero(solvable)
    n_free = len(free_rows)
    idx[free_rows, free_cols] = np.arange(n_free)

    diag = np.zeros(n_free)
    off_i, off_j = [], []
    b = np.zeros((n_free, 3))

    def neighbor(dr, dc, guid, sign):
        nr = free_rows + dr
        nc = free_cols + dc
        inside = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
        nrc = np.clip(nr, 0, h - 1)
        ncc = np.clip(nc, 0, w - 1)
        is_free = inside & solvable[nrc, ncc]
        is_dir = inside & problem.dirichlet[nrc, ncc]
        included = is_free | is_dir
        diag[included] += 1.0
        src = np.flatnonzero(is_free)
        off_i.extend(src)
        off_j.extend(idx[nrc[src], ncc[src]])
        dirsel = np.flatnonzero(is_dir)
        b[dirsel] += problem.fixed[nrc[dirsel], ncc[dirsel]]
        # guidance from p toward this neighbor
        if guid is not None:
            gr = free_rows.copy()
            gc = free_cols.copy()
            if dr < 0 or dc < 0:
                gr += dr
                gc += dc
            inc = np.flatnonzero(included)
            b[inc] -= sign * guid[gr[inc], gc[inc]]

    neighbor(0, 1, problem.guidance_x, +1.0)
    neighbor(0, -1, problem.guidance_x, -1.0)
    neighbor(1, 0, problem.guidance_y, +1.0)
    neighbor(-1, 0, problem.guidance_y, -1.0)

    off_i = np.asarray(off_i, dtype=np.int64)
    off_j = np.asarray(off_j, dtype=np.int64)
    rows_m = np.concatenate([np.arange(n_free), off_i])
    cols_m = np.concatenate([np.arange(n_free), off_j])
    vals_m = np.concatenate([diag, -np.ones(len(off_i))])
    a = sparse.csr_matrix((vals_m, (rows_m, cols_m)), shape=(n_free, n_free))

    x0 = problem.fixed[free_rows, free_cols]
    solution = np.empty((n_free, 3))
    for ch in range(3):
        iters = [0]

        def count(_xk):
            iters[0] += 1

        sol, info = cg(a, b[:, ch], x0=x0[:, ch], rtol=CG_RTOL, atol=0.0,
                       maxiter=CG_MAXITER, callback=count)
        resid = np.linalg.norm(a @ sol - b[:, ch])
        denom = np.linalg.norm(b[:, ch])
        rel = resid / denom if denom > 0 else (0.0 if resid == 0.0 else np.inf)
        stats.residuals.append(float(rel))
        stats.iterations.append(iters[0])
        stats.converged.append(info == 0)
        if info != 0:
            stats.warnings.append(
                f"channel {ch}: conjugate gradient stopped at relative residual {rel:.3e}")
        solution[:, ch] = sol

    out[free_rows, free_cols] = np.clip(solution, 0.0, 255.0)
    mask_out = problem.dirichlet | problem.free
    return Image(np.where(mask_out[..., None], out, 0.0), mask_out), stats

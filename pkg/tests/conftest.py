"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
import pytest

from multistitch.image import Image
from multistitch.maxflow import FlowGraph
from multistitch.registration import CanvasFrame
from multistitch.seam import (EnergyParams, StitchProblem, build_duplication_edges,
                              mask_term, smoothness_term, warp_term)


@pytest.fixture(scope="session", autouse=True)
def warm_maxflow_jit():
    """Compile the min-cut kernel once so timed tests measure solves."""
    g = FlowGraph(2)
    g.add_terminal(0, 1.0, 0.0)
    g.add_terminal(1, 0.0, 1.0)
    g.add_edge(0, 1, 1.0, 0.0)
    g.solve()


def random_image(rng, h, w, lo=0.0, hi=255.0, mask=None) -> Image:
    return Image(rng.uniform(lo, hi, size=(h, w, 3)), mask)


def tiny_problem(seed=0, h=2, w=3, n_candidates=2, params=None,
                 n_dup=2, full_masks=True) -> StitchProblem:
    """Small random StitchProblem with canvas == reference frame."""
    rng = np.random.default_rng(seed)
    canvas = CanvasFrame(w, h, 0, 0)
    sources = []
    for _ in range(n_candidates + 1):
        mask = None if full_masks else rng.random((h, w)) > 0.2
        sources.append(random_image(rng, h, w, mask=mask))
    inliers = [rng.uniform(0, (w - 1, h - 1), size=(3, 2)) for _ in range(n_candidates)]
    dup_pairs = []
    for _ in range(n_candidates):
        k = rng.integers(0, n_dup + 1)
        p = np.column_stack([rng.integers(0, w, k), rng.integers(0, h, k)])
        q = np.column_stack([rng.integers(0, w, k), rng.integers(0, h, k)])
        keep = np.any(p != q, axis=1) if k else np.zeros(0, dtype=bool)
        dup_pairs.append((p[keep], q[keep]))
    if params is None:
        params = EnergyParams(mask_penalty=50.0, warp_weight=4.0, seam_color_weight=0.02,
                              seam_edge_weight=0.01, potts_weight=0.5,
                              duplication_weight=3.0, duplication_radius=0,
                              patch_radius=1)
    return StitchProblem(canvas, sources, inliers, dup_pairs, params)


def naive_total_energy(problem: StitchProblem, labeling) -> float:
    """Plain-loop energy summation, independent of the vectorized path."""
    h, w = problem.shape
    x = np.asarray(labeling, dtype=np.int64).reshape(h, w)
    par = problem.params
    total = 0.0
    warp_planes = warp_term(problem)
    for yy in range(h):
        for xx in range(w):
            lab = int(x[yy, xx])
            total += mask_term((xx, yy), lab, problem)
            if lab != 0:
                total += par.warp_weight * warp_planes[lab - 1][yy, xx]
    for yy in range(h):
        for xx in range(w):
            if xx + 1 < w:
                total += smoothness_term((xx, yy), (xx + 1, yy),
                                         int(x[yy, xx]), int(x[yy, xx + 1]), problem)
            if yy + 1 < h:
                total += smoothness_term((xx, yy), (xx, yy + 1),
                                         int(x[yy, xx]), int(x[yy + 1, xx]), problem)
    edges, _ = build_duplication_edges(problem)
    for edge in edges:
        if x[edge.a[1], edge.a[0]] == 0 and x[edge.b[1], edge.b[0]] == edge.candidate:
            total += edge.weight
    return total

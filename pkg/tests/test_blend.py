"""Poisson blending tests: guidance construction and solver contracts."""

import numpy as np
import pytest

from multistitch.blend import BlendProblem, build_guidance, solve_poisson
from multistitch.exceptions import EmptyProblemError
from multistitch.image import Image
from multistitch.seam import composite
from conftest import tiny_problem


def _constant_sources(v0, v1, h=12, w=24, split=None):
    """Two constant sources and a left/right split labeling."""
    split = w // 2 if split is None else split
    s0 = Image(np.full((h, w, 3), float(v0)))
    s1 = Image(np.full((h, w, 3), float(v1)))
    labels = np.zeros((h, w), dtype=np.int64)
    labels[:, split:] = 1
    return [s0, s1], labels


def test_guidance_uniform_labeling_copies_source_gradients():
    rng = np.random.default_rng(0)
    src = Image(rng.uniform(0, 255, (6, 7, 3)))
    labels = np.zeros((6, 7), dtype=np.int64)
    problem = build_guidance(src, labels, [src, Image(np.zeros((6, 7, 3)))])
    np.testing.assert_allclose(problem.guidance_x,
                               src.pixels[:, 1:] - src.pixels[:, :-1])
    np.testing.assert_allclose(problem.guidance_y,
                               src.pixels[1:] - src.pixels[:-1])


def test_guidance_between_constant_sources_is_zero():
    sources, labels = _constant_sources(10, 20)
    comp = Image(np.where((labels == 0)[..., None], 10.0, 20.0) * np.ones(3))
    problem = build_guidance(comp, labels, sources)
    np.testing.assert_array_equal(problem.guidance_x, 0.0)
    np.testing.assert_array_equal(problem.guidance_y, 0.0)


def test_guidance_all_reference_has_no_free_pixels():
    sources, labels = _constant_sources(10, 20)
    labels[:] = 0
    problem = build_guidance(sources[0], labels, sources)
    assert not problem.free.any()
    out, stats = solve_poisson(problem)
    np.testing.assert_array_equal(out.pixels, sources[0].pixels)
    assert stats.passthrough_components == 0


def test_guidance_empty_problem_raises():
    empty = Image(np.zeros((3, 3, 3)), np.zeros((3, 3), bool))
    with pytest.raises(EmptyProblemError):
        build_guidance(empty, np.zeros((3, 3), np.int64), [empty, empty])


def test_single_source_reproduced_through_own_gradients():
    rng = np.random.default_rng(1)
    px = rng.uniform(20, 230, (10, 14, 3))
    border = np.zeros((10, 14), bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    problem = BlendProblem(
        fixed=px.copy(),
        dirichlet=border,
        free=~border,
        guidance_x=px[:, 1:] - px[:, :-1],
        guidance_y=px[1:] - px[:-1],
    )
    out, stats = solve_poisson(problem)
    assert max(stats.residuals) <= 1e-6
    np.testing.assert_allclose(out.pixels, px, atol=0.5)


def test_two_region_seam_relaxes_to_smooth_field():
    sources, labels = _constant_sources(10, 20)
    comp = composite_like(sources, labels)
    problem = build_guidance(comp, labels, sources)
    out, stats = solve_poisson(problem)
    assert all(stats.converged)
    assert max(stats.residuals) <= 1e-6
    # Dirichlet (reference-labeled) pixels are bit-identical
    np.testing.assert_array_equal(out.pixels[problem.dirichlet],
                                  comp.pixels[problem.dirichlet])
    # no residual hard step anywhere in the free region
    free_cols = np.flatnonzero(labels[0] == 1)
    diffs = np.abs(np.diff(out.pixels[:, free_cols[0] - 1:], axis=1))
    assert diffs.max() < 2.0


def composite_like(sources, labels):
    px = np.where((labels == 0)[..., None], sources[0].pixels, sources[1].pixels)
    return Image(px)


def test_component_without_boundary_passes_through():
    sources, labels = _constant_sources(10, 20)
    labels[:] = 1  # nothing anchors the field
    comp = composite_like(sources, labels)
    problem = build_guidance(comp, labels, sources)
    out, stats = solve_poisson(problem)
    assert stats.passthrough_components == 1
    assert stats.warnings
    np.testing.assert_allclose(out.pixels, comp.pixels, atol=0.5)


def test_output_range_and_finiteness():
    prob = tiny_problem(seed=4, h=6, w=8, full_masks=False)
    labels = np.zeros(prob.shape, np.int64)
    labels[:, 4:] = 1
    comp = composite(labels, prob)
    problem = build_guidance(comp, labels, prob.sources)
    out, _ = solve_poisson(problem)
    assert np.all(np.isfinite(out.pixels))
    assert out.pixels.min() >= 0.0 and out.pixels.max() <= 255.0


def test_blend_preserves_aligned_ramp_across_seam():
    """Identical aligned sources under a split labeling must blend to the
    original field exactly (a sign error in the guidance would bend it)."""
    h, w = 10, 20
    ramp = np.tile(np.linspace(30.0, 200.0, w), (h, 1))[..., None] * np.ones(3)
    s0 = Image(ramp.copy())
    s1 = Image(ramp.copy())
    labels = np.zeros((h, w), np.int64)
    labels[:, w // 2:] = 1
    comp = Image(ramp.copy())
    out, stats = solve_poisson(build_guidance(comp, labels, [s0, s1]))
    assert max(stats.residuals) <= 1e-6
    np.testing.assert_allclose(out.pixels, ramp, atol=1e-6)

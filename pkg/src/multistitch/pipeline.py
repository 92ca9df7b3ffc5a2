"""End-to-end orchestration: load, register, seam-find, blend, write outputs.

`stitch_pair` is the library entry point (returns every intermediate);
`run_pipeline` adds file I/O around it: panorama.png, labels.png (+ legend),
candidates/, report.txt, energy.log under the output directory.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import blend as blend_mod
from .config import RunConfig
from .correspond import CorrespondenceSet, detect_and_match, parse_correspondences
from .expansion import ExpansionResult, alpha_expansion
from .image import Image, load_image, save_image
from .registration import CanvasFrame, RegistrationResult, build_registrations
from .seam import EnergyParams, StitchProblem, composite

log = logging.getLogger(__name__)

LABEL_PALETTE = [
    (0, 255, 0),     # 0: reference
    (255, 0, 0),
    (0, 0, 255),
    (255, 255, 0),
    (255, 0, 255),
    (0, 255, 255),
    (255, 128, 0),
]


@dataclass
class RunReport:
    """Per-stage timings, filter accounting, and final energy summary."""

    timings_ms: dict = field(default_factory=dict)
    registration_stats: object = None
    canvas: CanvasFrame = None
    n_labels: int = 0
    energy: object = None
    moves: int = 0
    cycles: int = 0
    truncated_terms: int = 0
    blend_stats: object = None
    outputs: dict = field(default_factory=dict)
    seed: int = 0
    notes: list = field(default_factory=list)

    def render_text(self) -> str:
        lines = ["stitch run report", "================="]
        lines.append(f"seed: {self.seed}")
        if self.canvas is not None:
            lines.append(f"canvas: {self.canvas.width}x{self.canvas.height} "
                         f"offset=({self.canvas.offset_x},{self.canvas.offset_y})")
        lines.append(f"labels: {self.n_labels}")
        st = self.registration_stats
        if st is not None:
            lines.append("registration:")
            lines.append(f"  generated: {st.generated}")
            lines.append(f"  screened out: {st.screened_out} {st.screen_reasons}")
            lines.append(f"  dedup dropped: {st.dedup_dropped}")
            lines.append(f"  kept: {st.kept}")
            lines.append(f"  reconciles: {st.reconciles()}")
        if self.energy is not None:
            lines.append(f"final energy: {self.energy}")
            lines.append(f"accepted moves: {self.moves} over {self.cycles} cycle(s), "
                         f"truncated terms: {self.truncated_terms}")
        bs = self.blend_stats
        if bs is not None:
            lines.append(f"blend residuals: {['%.2e' % r for r in bs.residuals]} "
                         f"iterations: {bs.iterations}")
            for warning in bs.warnings:
                lines.append(f"  warning: {warning}")
        lines.append("timings (ms):")
        for stage, ms in self.timings_ms.items():
            lines.append(f"  {stage}: {ms:.1f}")
        for note in self.notes:
            lines.append(f"note: {note}")
        if self.outputs:
            lines.append("outputs:")
            for name, path in self.outputs.items():
                lines.append(f"  {name}: {path}")
        return "\n".join(lines) + "\n"


@dataclass
class StitchOutcome:
    panorama: Image
    labeling: np.ndarray
    problem: StitchProblem
    registration: RegistrationResult
    expansion: ExpansionResult
    blend_stats: object
    report: RunReport


def place_on_canvas(img: Image, canvas: CanvasFrame) -> Image:
    """Lay an image out on the canvas at the reference offset."""
    pixels = np.zeros((canvas.height, canvas.width, 3))
    mask = np.zeros((canvas.height, canvas.width), dtype=bool)
    ox, oy = canvas.offset_x, canvas.offset_y
    pixels[oy:oy + img.height, ox:ox + img.width] = img.pixels
    mask[oy:oy + img.height, ox:ox + img.width] = img.mask
    return Image(pixels, mask)


def forward_warp_points(registration, xy1: np.ndarray, canvas: CanvasFrame) -> np.ndarray:
    """Canvas positions where a registration renders candidate points.

    Starts from the refined homography and applies a few fixed-point
    corrections against the mesh (the mesh maps canvas -> candidate, so the
    residual in candidate space approximates the canvas-space correction
    for near-rigid local warps).
    """
    xy1 = np.asarray(xy1, dtype=np.float64).reshape(-1, 2)
    q = registration.homography.apply(xy1) + canvas.offset
    for _ in range(3):
        sx, sy, inside = registration.mesh.sample(q[:, 0], q[:, 1])
        corr = xy1 - np.stack([sx, sy], axis=1)
        q = np.where(inside[:, None], q + corr, q)
    return q


def assemble_problem(i0: Image, cs: CorrespondenceSet, reg: RegistrationResult,
                     params: EnergyParams) -> StitchProblem:
    """Build the seam MRF instance from the registration stage output.

    Duplication pairs connect every correspondence's reference position with
    the canvas position where each registration renders its match, so a
    labeling showing the same scene point twice pays the duplication term.
    """
    canvas = reg.canvas
    sources = [place_on_canvas(i0, canvas)] + [r.warped for r in reg.registrations]
    inlier_points = [canvas.ref_to_canvas(cs.xy0[r.inlier_indices])
                     for r in reg.registrations]
    dup_pairs = []
    for r in reg.registrations:
        p = np.round(canvas.ref_to_canvas(cs.xy0)).astype(np.int64)
        q = np.round(forward_warp_points(r, cs.xy1, canvas)).astype(np.int64)
        ok = ((p[:, 0] >= 0) & (p[:, 0] < canvas.width)
              & (p[:, 1] >= 0) & (p[:, 1] < canvas.height)
              & (q[:, 0] >= 0) & (q[:, 0] < canvas.width)
              & (q[:, 1] >= 0) & (q[:, 1] < canvas.height))
        dup_pairs.append((p[ok], q[ok]))
    return StitchProblem(canvas, sources, inlier_points, dup_pairs, params)


def stitch_pair(i0: Image, i1: Image, cs: CorrespondenceSet, cfg: RunConfig) -> StitchOutcome:
    """Registration + seam finding + optional blending for one image pair."""
    report = RunReport(seed=cfg.seed)
    cs.validate_bounds((i0.width, i0.height), (i1.width, i1.height))

    t0 = time.perf_counter()
    diag = float(np.hypot(i0.width, i0.height))
    reg = build_registrations(i0, i1, cs, cfg.registration_params(diag), cfg.seed)
    report.timings_ms["registration"] = (time.perf_counter() - t0) * 1e3
    report.registration_stats = reg.stats
    report.canvas = reg.canvas

    t0 = time.perf_counter()
    problem = assemble_problem(i0, cs, reg, cfg.energy_params())
    report.timings_ms["energy-assembly"] = (time.perf_counter() - t0) * 1e3
    report.n_labels = problem.n_labels

    t0 = time.perf_counter()
    result = alpha_expansion(problem)
    report.timings_ms["seam"] = (time.perf_counter() - t0) * 1e3
    report.energy = result.energy
    report.moves = len(result.trace)
    report.cycles = result.cycles
    report.truncated_terms = result.truncated_terms

    t0 = time.perf_counter()
    panorama = composite(result.labeling, problem)
    blend_stats = None
    if cfg.blend:
        guidance = blend_mod.build_guidance(panorama, result.labeling, problem.sources)
        panorama, blend_stats = blend_mod.solve_poisson(guidance)
    report.timings_ms["blend"] = (time.perf_counter() - t0) * 1e3
    report.blend_stats = blend_stats

    return StitchOutcome(panorama, result.labeling, problem, reg, result,
                         blend_stats, report)


def label_map_image(labeling: np.ndarray, n_labels: int) -> Image:
    """Distinct saturated color per label."""
    palette = np.asarray([LABEL_PALETTE[i % len(LABEL_PALETTE)] for i in range(n_labels)],
                         dtype=np.float64)
    return Image(palette[np.asarray(labeling, dtype=np.int64)])


def save_label_map(labeling: np.ndarray, n_labels: int, path) -> None:
    """Write the label map as a palette-indexed PNG (pixel value = label)."""
    from PIL import Image as PILImage
    data = np.asarray(labeling, dtype=np.uint8)
    pil = PILImage.fromarray(data, mode="P")
    palette = []
    for i in range(max(n_labels, 1)):
        palette.extend(LABEL_PALETTE[i % len(LABEL_PALETTE)])
    pil.putpalette(palette)
    pil.save(path, format="PNG")


def label_legend(n_labels: int) -> str:
    lines = []
    for i in range(n_labels):
        color = LABEL_PALETTE[i % len(LABEL_PALETTE)]
        name = "reference" if i == 0 else f"candidate {i}"
        lines.append(f"label {i}: rgb{color} {name}")
    return "\n".join(lines) + "\n"


def _dump_candidates(outcome: StitchOutcome, cs: CorrespondenceSet, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for i, reg in enumerate(outcome.registration.registrations, start=1):
        save_image(reg.warped, os.path.join(directory, f"candidate_{i}.png"), with_alpha=True)
        hom = reg.homography.matrix
        with open(os.path.join(directory, f"candidate_{i}.txt"), "w", encoding="utf-8") as fh:
            fh.write("homography (row-major): "
                     + " ".join(repr(float(v)) for v in hom.ravel()) + "\n")
            fh.write(f"inliers: {len(reg.inlier_indices)}\n")
            fh.write(f"seed point: {float(reg.seed_point[0])!r} {float(reg.seed_point[1])!r}\n")
            fh.write(f"cpw fallback: {reg.cpw_fallback}\n")


def run_pipeline(cfg: RunConfig) -> RunReport:
    """File-level pipeline: read inputs, stitch, write the output directory."""
    t_start = time.perf_counter()
    i0 = load_image(cfg.reference)
    i1 = load_image(cfg.candidate)
    if cfg.correspondences:
        with open(cfg.correspondences, "r", encoding="utf-8") as fh:
            cs = parse_correspondences(fh)
    else:
        cs = detect_and_match(i0, i1)

    outcome = stitch_pair(i0, i1, cs, cfg)
    report = outcome.report

    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    panorama_path = os.path.join(out_dir, "panorama.png")
    save_image(outcome.panorama, panorama_path)
    report.outputs["panorama"] = panorama_path

    labels_path = cfg.dump_labels or os.path.join(out_dir, "labels.png")
    save_label_map(outcome.labeling, outcome.problem.n_labels, labels_path)
    with open(os.path.splitext(labels_path)[0] + ".txt", "w", encoding="utf-8") as fh:
        fh.write(label_legend(outcome.problem.n_labels))
    report.outputs["labels"] = labels_path

    cand_dir = cfg.dump_candidates or os.path.join(out_dir, "candidates")
    _dump_candidates(outcome, cs, cand_dir)
    report.outputs["candidates"] = cand_dir

    energy_path = cfg.energy_log or os.path.join(out_dir, "energy.log")
    with open(energy_path, "w", encoding="utf-8") as fh:
        fh.write("# cycle label E_m E_w E_s E_d total\n")
        for move in outcome.expansion.trace:
            fh.write(move.log_line() + "\n")
    report.outputs["energy-log"] = energy_path

    report.timings_ms["total"] = (time.perf_counter() - t_start) * 1e3
    report_path = os.path.join(out_dir, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.render_text())
    report.outputs["report"] = report_path
    return report


def make_stitch_fn(cfg: RunConfig):
    """Adapter for crop_eval: (cropped reference, candidate, correspondences
    or None) -> (panorama, canvas offset of the cropped reference)."""

    def stitch_fn(ref: Image, cand: Image, cs):
        if cs is None:
            cs = detect_and_match(ref, cand)
        outcome = stitch_pair(ref, cand, cs, cfg)
        canvas = outcome.registration.canvas
        return outcome.panorama, (canvas.offset_x, canvas.offset_y)

    return stitch_fn

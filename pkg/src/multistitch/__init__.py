"""Two-image panorama stitching with multiple candidate registrations.

Pipeline: sparse correspondences -> diverse LMedS homographies with
screening, deduplication, sigmoid-objective refinement, and CPW meshes ->
multi-label MRF seam finding (alpha expansion over exact min-cuts, with
warp-confidence and duplication-avoidance terms) -> Poisson blending.
Includes PSNR / MS-SSIM metrics and a crop-based evaluation harness.
"""

from .blend import BlendProblem, build_guidance, solve_poisson
from .config import RunConfig, parse_config
from .correspond import (Correspondence, CorrespondenceSet, detect_and_match,
                         parse_correspondences, reprojection_error,
                         serialize_correspondences)
from .exceptions import (ConfigError, CorrespondenceParseError, DecodeError,
                         DegeneracyError, EvaluationError, InsufficientDataError,
                         InsufficientMatchesError, NoRegistrationError, SizeError,
                         StitchError)
from .expansion import alpha_expansion, initial_labeling
from .image import (Image, bilinear_sample, gradient_magnitude, load_image,
                    save_image, to_grayscale)
from .maxflow import FlowGraph
from .metrics import EvalRow, crop_eval, ms_ssim, psnr, write_eval_csv
from .pipeline import RunReport, assemble_problem, run_pipeline, stitch_pair
from .registration import (CandidateRegistration, CanvasFrame, Homography,
                           RegistrationParams, WarpMesh, build_registrations,
                           cpw_refine, deduplicate, estimate_homography_lmeds,
                           generate_candidates, inlier_set, refine_homography,
                           screen, similarity, smooth_inlier_objective, warp_image)
from .seam import (DuplicationEdge, EnergyParams, EnergyTerms, StitchProblem,
                   brute_force_minimize, build_duplication_edges, build_energy_terms,
                   color_quality, composite, mask_term, motion_quality,
                   smoothness_term, total_energy, warp_term)
from .synth import SCENE_TYPES, SyntheticScene, make_synthetic_scene

__version__ = "0.1.0"

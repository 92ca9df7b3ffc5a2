"""Run configuration: flat "key = value" files, defaults, CLI overrides.

Every parameter carries the frozen default from its module; a config file
or --set flag overrides individual keys. Unknown keys are rejected with the
offending line. The seed/growth radii are stored as fractions of the
reference image diagonal and resolved to pixels when the pipeline runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .exceptions import ConfigError
from .metrics import CROP_SIDES
from .registration import RegistrationParams
from .seam import EnergyParams


@dataclass
class RunConfig:
    reference: str = None
    candidate: str = None
    correspondences: str = None
    out: str = "stitch-out"
    seed: int = 0
    blend: bool = True
    # registration
    ransac_iters: int = 500
    seed_radius_frac: float = 0.15
    inlier_threshold: float = 3.0
    growth_radius_frac: float = 0.05
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
    # seam energy (external key names keep the lambda_* spelling)
    lambda_m: float = 1e4
    lambda_w: float = 100.0
    lambda_c: float = 0.05
    lambda_s: float = 1.0
    lambda_e: float = 0.5
    lambda_potts: float = 5.0
    lambda_d: float = 500.0
    patch_radius: int = 3
    dup_radius: int = 5
    sigma_m: float = None  # defaults to dup_radius / 2
    sigma_d: float = None
    truncation: str = "clamp"
    # evaluation
    eval_crop: int = 50
    eval_side: str = "left"
    # dumps
    dump_candidates: str = None
    dump_labels: str = None
    energy_log: str = None

    def registration_params(self, diagonal: float) -> RegistrationParams:
        return RegistrationParams(
            ransac_iters=self.ransac_iters,
            seed_radius=self.seed_radius_frac * diagonal,
            inlier_threshold=self.inlier_threshold,
            growth_radius=self.growth_radius_frac * diagonal,
            dedup_threshold=self.dedup_threshold,
            max_registrations=self.max_registrations,
            sim_dev_max=self.sim_dev_max,
            scale_min=self.scale_min,
            scale_max=self.scale_max,
            overlap_identity_max=self.overlap_identity_max,
            diag_min_frac=self.diag_min_frac,
            cpw_grid=self.cpw_grid,
            cpw_data_weight=self.cpw_data_weight,
            cpw_similarity_weight=self.cpw_similarity_weight,
        )

    def energy_params(self) -> EnergyParams:
        return EnergyParams(
            mask_penalty=self.lambda_m,
            warp_weight=self.lambda_w,
            color_mix=self.lambda_c,
            seam_color_weight=self.lambda_s,
            seam_edge_weight=self.lambda_e,
            potts_weight=self.lambda_potts,
            duplication_weight=self.lambda_d,
            patch_radius=self.patch_radius,
            duplication_radius=self.dup_radius,
            sigma_motion=self.sigma_m if self.sigma_m is not None else self.dup_radius / 2.0,
            sigma_duplication=self.sigma_d if self.sigma_d is not None else self.dup_radius / 2.0,
            truncation=self.truncation,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_STRING_KEYS = {"reference", "candidate", "correspondences", "out", "truncation",
                "eval_side", "dump_candidates", "dump_labels", "energy_log"}
_INT_KEYS = {"seed", "ransac_iters", "max_registrations", "cpw_grid",
             "patch_radius", "dup_radius", "eval_crop"}
_BOOL_KEYS = {"blend"}


def _convert(key: str, raw: str):
    if key in _STRING_KEYS:
        return raw
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def _check_constraints(cfg: RunConfig, context: str) -> None:
    try:
        cfg.registration_params(1000.0)
        cfg.energy_params()
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc
    if cfg.eval_side not in CROP_SIDES:
        raise ConfigError(f"{context}: eval_side must be one of {CROP_SIDES}")
    if cfg.eval_crop <= 0:
        raise ConfigError(f"{context}: eval_crop must be positive")
    if cfg.seed < 0:
        raise ConfigError(f"{context}: seed must be nonnegative")


def set_config_value(cfg: RunConfig, key: str, raw: str, context: str = "override") -> RunConfig:
    """Apply one key=value assignment with validation."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"{context}: unknown key {key!r}")
    try:
        value = _convert(key, raw)
    except ValueError as exc:
        raise ConfigError(f"{context}: key {key!r}: {exc}") from exc
    updated = replace(cfg, **{key: value})
    _check_constraints(updated, f"{context}: key {key!r}")
    return updated


def parse_config(path) -> RunConfig:
    """Parse a flat key = value file with '#' comments; unknown keys and
    constraint violations raise ConfigError naming the key and line."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cfg = RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            cfg = set_config_value(cfg, key.strip(), value.strip(), f"{path}:{lineno}")
    return cfg

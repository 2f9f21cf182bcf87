"""Plain-text key=value run configuration.

One flat namespace covers every tunable the pipeline exposes; unknown keys
are rejected so typos fail loudly instead of silently running defaults.
Lines are `key = value`, blank, or `#` comments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from . import mcl as mcl_mod
from .targets import DEFAULT_GAMMA, DEFAULT_TAU, SupervisionMode
from .training import LossWeights, OptimConfig

_MODES = {m.value for m in SupervisionMode}


@dataclass(frozen=True)
class RunConfig:
    # positional encoding
    encoding_bands: int = 30
    encoding_base_freq: float = math.pi
    # network
    hidden_width: int = 128
    hidden_layers: int = 4
    first_layer_factor: float = 30.0
    # ray sampling
    samples_per_ray: int = 40
    drop_behind_origin: bool = False
    # supervision
    mode: str = "curvature"
    trunc_band: float = DEFAULT_TAU
    weight_gamma: float = DEFAULT_GAMMA
    # loss
    endpoint_weight: float = 1e-1
    eikonal_weight: float = 1e-4
    smoothness_weight: float = 1e-3
    smooth_neighbors: int = 4
    smoothness_literal: bool = False
    # optimizer
    learn_rate: float = 1e-4
    weight_decay: float = 1e-2
    epochs: int = 10
    batch_rays: int = 512
    curvature_warmup: int = 0
    seed: int = 0
    # scanner synthesis
    beams: int = 64
    fov: float = 2.0 * math.pi
    max_range: float = 100.0
    scan_noise: float = 0.0
    # resolutions
    mesh_res: int = 256
    field_grid_res: int = 256
    # localization
    mcl_particles: int = mcl_mod.DEFAULT_PARTICLES
    mcl_conv_std: float = mcl_mod.DEFAULT_CONV_STD
    mcl_gate_trans: float = mcl_mod.DEFAULT_GATE_TRANS
    mcl_gate_rot: float = mcl_mod.DEFAULT_GATE_ROT
    mcl_sigma_z: float = mcl_mod.DEFAULT_SIGMA_Z
    mcl_runs: int = mcl_mod.DEFAULT_RUNS
    mcl_odom_trans_base: float = 0.01
    mcl_odom_trans_frac: float = 0.01
    mcl_odom_rot_base: float = 0.002
    mcl_odom_rot_frac: float = 0.01

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {sorted(_MODES)}, got {self.mode!r}")
        positive = (
            "encoding_bands", "encoding_base_freq", "hidden_width", "hidden_layers",
            "first_layer_factor", "samples_per_ray", "trunc_band", "weight_gamma",
            "learn_rate", "epochs", "batch_rays", "beams", "max_range",
            "mesh_res", "field_grid_res", "mcl_particles", "mcl_conv_std",
            "mcl_gate_trans", "mcl_gate_rot", "mcl_sigma_z", "mcl_runs",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        nonneg = (
            "endpoint_weight", "eikonal_weight", "smoothness_weight", "smooth_neighbors",
            "weight_decay", "curvature_warmup", "scan_noise", "seed",
            "mcl_odom_trans_base", "mcl_odom_trans_frac",
            "mcl_odom_rot_base", "mcl_odom_rot_frac",
        )
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.samples_per_ray < 2:
            raise ValueError("samples_per_ray must be at least 2")
        if not 0.0 < self.fov <= 2.0 * math.pi:
            raise ValueError("fov must be in (0, 2*pi]")
        if self.mesh_res < 2 or self.field_grid_res < 2:
            raise ValueError("grid resolutions must be at least 2")

    # --- adapters into the per-module config types -------------------------

    def supervision_mode(self) -> SupervisionMode:
        return SupervisionMode(self.mode)

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            endpoint=self.endpoint_weight,
            eikonal=self.eikonal_weight,
            smooth=self.smoothness_weight,
            gamma=self.weight_gamma,
            tau=self.trunc_band,
            knn=self.smooth_neighbors,
            smoothness_literal=self.smoothness_literal,
        )

    def optim(self) -> OptimConfig:
        return OptimConfig(
            lr=self.learn_rate,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_rays=self.batch_rays,
            seed=self.seed,
            samples_per_ray=self.samples_per_ray,
            drop_behind_origin=self.drop_behind_origin,
            warmup_steps=self.curvature_warmup,
        )

    def mcl(self) -> mcl_mod.MclConfig:
        return mcl_mod.MclConfig(
            n_particles=self.mcl_particles,
            conv_std=self.mcl_conv_std,
            gate_trans=self.mcl_gate_trans,
            gate_rot=self.mcl_gate_rot,
            sigma_z=self.mcl_sigma_z,
            odom_trans_base=self.mcl_odom_trans_base,
            odom_trans_frac=self.mcl_odom_trans_frac,
            odom_rot_base=self.mcl_odom_rot_base,
            odom_rot_frac=self.mcl_odom_rot_frac,
            seed=self.seed,
            runs=self.mcl_runs,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ValueError(f"config key {key}: {exc}") from None


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    values = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ValueError(f"line {ln}: expected key=value, got {line!r}")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"line {ln}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    if overrides:
        for key, val in overrides.items():
            if key not in _FIELD_TYPES:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = val
    return RunConfig(**values)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), overrides)


def config_text(cfg: RunConfig) -> str:
    """Serialize back to the key=value format (round-trips through parse)."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"

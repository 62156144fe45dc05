"""JSON (de)serialization for the nested config dataclasses."""

from __future__ import annotations

import dataclasses
import json
from typing import Any

from .geometry import TomogramDims
from .model.config import ModelConfig
from .sim import ArtifactConfig, ClassSpec, PromptSpec, SimConfig


class ConfigError(ValueError):
    """Invalid or missing config field; message carries the field path."""


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}.{key}: missing required field")
    return d[key]


def sim_config_to_dict(cfg: SimConfig) -> dict:
    return {
        "dims": {"w": cfg.dims.w, "h": cfg.dims.h, "d": cfg.dims.d},
        "tilt_min": cfg.tilt_min,
        "tilt_max": cfg.tilt_max,
        "tilt_step": cfg.tilt_step,
        "particles_per_scene": list(cfg.particles_per_scene),
        "classes": [
            {"label": c.label, "d_min": c.d_min, "d_max": c.d_max, "texture": c.texture}
            for c in cfg.classes
        ],
        "central_plane_bias": cfg.central_plane_bias,
        "artifact": dataclasses.asdict(cfg.artifact),
    }


def sim_config_from_dict(d: dict, path: str = "sim") -> SimConfig:
    try:
        dims = _require(d, "dims", path)
        classes = tuple(
            ClassSpec(
                label=int(_require(c, "label", f"{path}.classes[{i}]")),
                d_min=float(_require(c, "d_min", f"{path}.classes[{i}]")),
                d_max=float(_require(c, "d_max", f"{path}.classes[{i}]")),
                texture=c.get("texture", "disc"),
            )
            for i, c in enumerate(_require(d, "classes", path))
        )
        artifact = ArtifactConfig(
            occlusion_prob=d.get("artifact", {}).get("occlusion_prob", 0.0),
            occlusion_width=tuple(d.get("artifact", {}).get("occlusion_width", (0.0, 0.0))),
            illum_order=d.get("artifact", {}).get("illum_order", 0),
            illum_amplitude=tuple(d.get("artifact", {}).get("illum_amplitude", (0.0, 0.0))),
            noise_sigma=d.get("artifact", {}).get("noise_sigma", 0.0),
        )
        return SimConfig(
            dims=TomogramDims(
                int(_require(dims, "w", f"{path}.dims")),
                int(_require(dims, "h", f"{path}.dims")),
                int(_require(dims, "d", f"{path}.dims")),
            ),
            tilt_min=float(d.get("tilt_min", -60.0)),
            tilt_max=float(d.get("tilt_max", 60.0)),
            tilt_step=float(d.get("tilt_step", 3.0)),
            particles_per_scene=tuple(d.get("particles_per_scene", (4, 8))),
            classes=classes,
            central_plane_bias=float(d.get("central_plane_bias", 0.15)),
            artifact=artifact,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def load_sim_config(path: str) -> SimConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return sim_config_from_dict(data, path="sim")


def prompt_spec_to_dict(spec: PromptSpec) -> dict:
    return {
        "count_range": list(spec.count_range),
        "fraction_choices": list(spec.fraction_choices),
        "zero_tilt_prob": spec.zero_tilt_prob,
    }


def prompt_spec_from_dict(d: dict) -> PromptSpec:
    return PromptSpec(
        count_range=tuple(d.get("count_range", (1, 2))),
        fraction_choices=tuple(d.get("fraction_choices", (1.0,))),
        zero_tilt_prob=float(d.get("zero_tilt_prob", 0.0)),
    )


def model_config_to_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["strides"] = list(cfg.strides)
    return d


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    if "strides" in d:
        d["strides"] = tuple(d["strides"])
    try:
        return ModelConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc

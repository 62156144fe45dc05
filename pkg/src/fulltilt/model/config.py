"""Model hyperparameters and their JSON round-trip."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


@dataclass(frozen=True)
class ModelConfig:
    """Network shape. Desk-scale defaults; the full-scale setting
    (c=256, l_aa=l_vp=l_d=6, m=900) stays reachable through config.
    """

    c: int = 64
    l_aa: int = 3
    l_vp: int = 3
    l_d: int = 3
    m: int = 100
    n_levels: int = 2
    n_heads: int = 8
    n_points: int = 4
    strides: tuple[int, ...] = (4, 8)
    ffn_ratio: int = 4
    # Module toggles for ablation harnesses.
    enable_tilt_encoder: bool = True
    enable_tilt_init: bool = True
    # Anchor chains feeding attention are detached by default (the
    # refinement scheme); gradient-vs-finite-difference checks disable this.
    detach_anchors: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.c % 2 != 0 or self.c < 4:
            raise ValueError("channel dim must be even and >= 4")
        if self.c % self.n_heads != 0:
            raise ValueError("channel dim must divide evenly into heads")
        if self.m < 1:
            raise ValueError("query count must be >= 1")
        if self.n_levels < 1 or len(self.strides) != self.n_levels:
            raise ValueError("strides must list one stride per level")
        if self.strides[0] != 4 or any(b != 2 * a for a, b in zip(self.strides, self.strides[1:])):
            raise ValueError("strides must be 4, 8, 16, ... (doubling)")

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["strides"] = list(self.strides)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        d["strides"] = tuple(d["strides"])
        return cls(**d)


TINY = ModelConfig(c=16, l_aa=1, l_vp=1, l_d=2, m=4, n_levels=1, strides=(4,), n_heads=2, n_points=2)
DESK = ModelConfig()

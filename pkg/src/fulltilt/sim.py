"""Synthetic geometric-primitive scenes and their tilt-series renderings.

Generates scenes of textured spheres with exact 3D ground truth, renders
clean orthographic line-integral projections, applies imaging artifacts
(illumination fields, occlusion bands, noise), and derives prompt sets.
Everything is a pure function of (config, seed), so epochs can be streamed
on the fly with random access by index and no intermediate files.

Rendering evaluates the sphere chord profile exactly integrated along x
over each pixel's extent, at the pixel-center row in y. Because y never
moves with the tilt angle, the per-image mass of an in-view particle is
identical across tilts up to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .geometry import (
    Box2D,
    Particle3D,
    TiltSchedule,
    TomogramDims,
    nearest_zero_tilt,
    project_particle,
    tilt_schedule,
)

TEXTURES = ("disc", "ring")
RING_SHELL_FRACTION = 0.25  # shell thickness as a fraction of the outer radius

# Minimum allowed center separation, as a fraction of the radius sum.
MIN_SEPARATION_FACTOR = 0.6
MAX_CONSECUTIVE_REJECTIONS = 100


@dataclass(frozen=True)
class ClassSpec:
    """One particle class: label, diameter range in pixels, texture."""

    label: int
    d_min: float
    d_max: float
    texture: str = "disc"

    def __post_init__(self):
        if self.label <= 0:
            raise ValueError("class label must be positive")
        if not 0 < self.d_min <= self.d_max:
            raise ValueError("diameter range must be positive and ordered")
        if self.texture not in TEXTURES:
            raise ValueError(f"texture must be one of {TEXTURES}")


@dataclass(frozen=True)
class ArtifactConfig:
    """Per-tilt artifact severities; all-zero means identity."""

    occlusion_prob: float = 0.0
    occlusion_width: tuple[float, float] = (0.0, 0.0)
    illum_order: int = 0
    illum_amplitude: tuple[float, float] = (0.0, 0.0)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.occlusion_prob <= 1.0:
            raise ValueError("occlusion_prob must be in [0, 1]")
        if self.occlusion_width[0] < 0 or self.occlusion_width[1] < self.occlusion_width[0]:
            raise ValueError("occlusion width range must be non-negative and ordered")
        if self.illum_order not in (0, 1, 2):
            raise ValueError("illumination polynomial order must be 0, 1, or 2")
        lo, hi = self.illum_amplitude
        if lo < 0 or hi < lo:
            raise ValueError("amplitude range must be non-negative and ordered")
        if hi >= 1.0:
            raise ValueError("amplitude >= 1 would let the illumination field reach zero")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    dims: TomogramDims
    tilt_min: float = -60.0
    tilt_max: float = 60.0
    tilt_step: float = 3.0
    particles_per_scene: tuple[int, int] = (4, 8)
    classes: tuple[ClassSpec, ...] = (ClassSpec(1, 8.0, 12.0, "disc"),)
    central_plane_bias: float = 0.15
    artifact: ArtifactConfig = field(default_factory=ArtifactConfig)

    def __post_init__(self):
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError("class labels must be unique")
        if not self.classes:
            raise ValueError("at least one class required")
        lo, hi = self.particles_per_scene
        if lo < 0 or hi < lo:
            raise ValueError("particle count range must be non-negative and ordered")
        if self.central_plane_bias <= 0:
            raise ValueError("central plane bias must be positive")
        shortest = min(self.dims.w, self.dims.h, self.dims.d)
        smallest = min(c.d_min for c in self.classes)
        if smallest > shortest:
            raise ValueError("smallest class diameter exceeds the volume")
        largest = max(c.d_max for c in self.classes)
        if largest > shortest:
            raise ValueError("class diameter range does not fit inside the volume")

    def schedule(self) -> TiltSchedule:
        return tilt_schedule(self.tilt_min, self.tilt_max, self.tilt_step)


@dataclass(frozen=True)
class Scene:
    dims: TomogramDims
    particles: tuple[Particle3D, ...]
    scene_id: str
    seed: int


@dataclass(frozen=True)
class TiltSeries:
    images: np.ndarray  # (N, H, W) float32
    schedule: TiltSchedule
    provenance: str = "external"

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[0] != len(self.schedule):
            raise ValueError("image count must equal schedule length")
        if not np.all(np.isfinite(self.images)):
            raise ValueError("tilt series contains non-finite values")


@dataclass(frozen=True)
class PromptSet:
    """Per-tilt 2D prompt boxes; the simulator-side analogue of user clicks."""

    items: tuple[Box2D, ...]

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(sorted({b.class_label for b in self.items}))

    def for_tilt(self, tilt_index: int) -> list[Box2D]:
        return [b for b in self.items if b.tilt_index == tilt_index]


def _texture_of(scene_cfg: SimConfig, label: int) -> str:
    for c in scene_cfg.classes:
        if c.label == label:
            return c.texture
    raise KeyError(f"unknown class label {label}")


def sample_scene(cfg: SimConfig, rng_seed, scene_id: str | None = None) -> Scene:
    """Draw a scene: uniform (x, y), center-biased z, rejection-sampled separation.

    Placement gives up on a particle after 100 consecutive rejections, so a
    scene may hold fewer particles than drawn when the volume is crowded.
    """
    rng = np.random.default_rng(rng_seed)
    dims = cfg.dims
    lo, hi = cfg.particles_per_scene
    target = int(rng.integers(lo, hi + 1))
    sigma = cfg.central_plane_bias * dims.d

    particles: list[Particle3D] = []
    rejections = 0
    while len(particles) < target and rejections < MAX_CONSECUTIVE_REJECTIONS:
        spec = cfg.classes[int(rng.integers(0, len(cfg.classes)))]
        d = float(rng.uniform(spec.d_min, spec.d_max))
        r = d / 2.0
        x = float(rng.uniform(r, dims.w - r))
        y = float(rng.uniform(r, dims.h - r))
        while True:
            z = float(rng.normal(dims.d / 2.0, sigma))
            if r <= z <= dims.d - r:
                break
        ok = all(
            math.dist((x, y, z), (p.x, p.y, p.z)) >= MIN_SEPARATION_FACTOR * (r + p.d / 2.0)
            for p in particles
        )
        if ok:
            particles.append(Particle3D(x, y, z, d, spec.label))
            rejections = 0
        else:
            rejections += 1

    if scene_id is None:
        scene_id = f"scene-{np.random.SeedSequence(rng_seed).entropy}"
    seed_int = int(np.random.SeedSequence(rng_seed).generate_state(1, np.uint64)[0])
    return Scene(dims=dims, particles=tuple(particles), scene_id=scene_id, seed=seed_int)


def _chord_row_integral(radius: float, dy: np.ndarray, x_left: np.ndarray) -> np.ndarray:
    """Per-pixel mass of a solid sphere: exact x-integral of 2*sqrt(R^2-u^2-v^2).

    ``dy``: row-center offsets from the projected center, shape (rows,).
    ``x_left``: pixel left-edge offsets, shape (cols,); each pixel spans
    [x_left, x_left+1). Antiderivative A(u) = u*sqrt(c^2-u^2) + c^2*asin(u/c)
    with c^2 = R^2 - dy^2.
    """
    c2 = radius * radius - dy * dy
    c2 = np.maximum(c2, 0.0)
    c = np.sqrt(c2)[:, None]
    lo = np.clip(x_left[None, :], -c, c)
    hi = np.clip(x_left[None, :] + 1.0, -c, c)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_lo = np.where(c > 0, lo / np.where(c > 0, c, 1.0), 0.0)
        ratio_hi = np.where(c > 0, hi / np.where(c > 0, c, 1.0), 0.0)
    a_lo = lo * np.sqrt(np.maximum(c * c - lo * lo, 0.0)) + c * c * np.arcsin(ratio_lo)
    a_hi = hi * np.sqrt(np.maximum(c * c - hi * hi, 0.0)) + c * c * np.arcsin(ratio_hi)
    return a_hi - a_lo


def _render_particle(image: np.ndarray, cx: float, cy: float, d: float, texture: str) -> None:
    h, w = image.shape
    r_out = d / 2.0
    row_lo = max(int(math.floor(cy - r_out - 1.0)), 0)
    row_hi = min(int(math.ceil(cy + r_out + 1.0)) + 1, h)
    col_lo = max(int(math.floor(cx - r_out - 1.0)), 0)
    col_hi = min(int(math.ceil(cx + r_out + 1.0)) + 1, w)
    if row_lo >= row_hi or col_lo >= col_hi:
        return
    dy = (np.arange(row_lo, row_hi) + 0.5) - cy
    x_left = np.arange(col_lo, col_hi) - cx
    patch = _chord_row_integral(r_out, dy, x_left)
    if texture == "ring":
        patch = patch - _chord_row_integral((1.0 - RING_SHELL_FRACTION) * r_out, dy, x_left)
    image[row_lo:row_hi, col_lo:col_hi] += patch


def render_clean(scene: Scene, schedule: TiltSchedule, textures: dict[int, str] | None = None) -> TiltSeries:
    """Render noise-free line-integral projections; overlaps add, background 0.

    ``textures`` maps class label to "disc" or "ring"; unlisted labels render
    as discs.
    """
    textures = textures or {}
    n = len(schedule)
    stack = np.zeros((n, scene.dims.h, scene.dims.w), dtype=np.float64)
    for i, theta in enumerate(schedule.angles_deg):
        for p in scene.particles:
            box = project_particle(p, theta, scene.dims, tilt_index=i)
            _render_particle(stack[i], box.x, box.y, p.d, textures.get(p.class_label, "disc"))
    return TiltSeries(images=stack.astype(np.float32), schedule=schedule, provenance=scene.scene_id)


def class_textures(cfg: SimConfig) -> dict[int, str]:
    return {c.label: c.texture for c in cfg.classes}


def apply_artifacts(stack: TiltSeries, cfg: ArtifactConfig, rng_seed) -> TiltSeries:
    """Per tilt: multiplicative illumination field, occlusion band, additive noise."""
    rng = np.random.default_rng(rng_seed)
    images = stack.images.astype(np.float64).copy()
    n, h, w = images.shape
    clean_range = float(images.max() - images.min())

    for i in range(n):
        coeff_count = {0: 1, 1: 3, 2: 6}[cfg.illum_order]
        coeffs = rng.uniform(-1.0, 1.0, size=coeff_count)
        amp = float(rng.uniform(*cfg.illum_amplitude))
        if amp > 0:
            u = np.linspace(-1.0, 1.0, w)[None, :]
            v = np.linspace(-1.0, 1.0, h)[:, None]
            terms = [np.ones((h, w)), u, v, u * u, u * v, v * v][:coeff_count]
            poly = sum(c * t for c, t in zip(coeffs, terms))
            peak = np.abs(poly).max()
            if peak > 0:
                poly = poly / peak
            images[i] = images[i] * (1.0 + amp * poly)

        occlude = rng.uniform() < cfg.occlusion_prob
        band_pos = float(rng.uniform(0, w))
        band_width = float(rng.uniform(*cfg.occlusion_width))
        if occlude and band_width > 0:
            lo = int(math.floor(band_pos))
            hi = min(int(math.ceil(band_pos + band_width)), w)
            images[i, :, lo:hi] = 0.0

        noise = rng.normal(0.0, 1.0, size=(h, w))
        if cfg.noise_sigma > 0 and clean_range > 0:
            images[i] = images[i] + cfg.noise_sigma * clean_range * noise

    return TiltSeries(images=images.astype(np.float32), schedule=stack.schedule, provenance=stack.provenance)


def derive_prompts(
    scene: Scene,
    schedule: TiltSchedule,
    selection: dict[int, int],
    projection_fraction: float = 1.0,
    zero_tilt_only: bool = False,
    rng_seed=0,
) -> PromptSet:
    """Sample ground-truth-exact prompt boxes for the requested classes.

    Each selected particle is projected onto a subset of tilts: all of them,
    a random subset of round(N * fraction), or only the nearest-zero tilt.
    """
    if not 0.0 < projection_fraction <= 1.0:
        raise ValueError("projection fraction must be in (0, 1]")
    rng = np.random.default_rng(rng_seed)
    n = len(schedule)
    by_class: dict[int, list[int]] = {}
    for idx, p in enumerate(scene.particles):
        by_class.setdefault(p.class_label, []).append(idx)

    for label, count in selection.items():
        have = len(by_class.get(label, []))
        if count > have:
            raise ValueError(f"class {label}: requested {count} prompts but scene has {have} particles")
        if count <= 0:
            raise ValueError("prompt counts must be positive")

    items: list[Box2D] = []
    zero_idx = nearest_zero_tilt(schedule)
    for label in sorted(selection):
        pool = by_class[label]
        chosen = rng.choice(len(pool), size=selection[label], replace=False)
        for j in sorted(int(c) for c in chosen):
            particle = scene.particles[pool[j]]
            if zero_tilt_only:
                tilts = [zero_idx]
            elif projection_fraction >= 1.0:
                tilts = list(range(n))
            else:
                k = max(1, int(round(n * projection_fraction)))
                tilts = sorted(int(t) for t in rng.choice(n, size=k, replace=False))
            for t in tilts:
                items.append(project_particle(particle, schedule.angles_deg[t], scene.dims, tilt_index=t))
    return PromptSet(items=tuple(items))


@dataclass(frozen=True)
class PromptSpec:
    """How the epoch stream derives prompts for each scene."""

    count_range: tuple[int, int] = (1, 2)
    fraction_choices: tuple[float, ...] = (1.0,)
    zero_tilt_prob: float = 0.0


def _item_seeds(rng_seed: int, index: int) -> tuple[int, int, int, int]:
    ss = np.random.SeedSequence(entropy=rng_seed, spawn_key=(index,))
    s = ss.generate_state(4, np.uint64)
    return tuple(int(v) for v in s)


def make_training_item(
    cfg: SimConfig, rng_seed: int, index: int, prompt_spec: PromptSpec | None = None
) -> tuple[TiltSeries, Scene, PromptSet]:
    """Build triple number ``index`` of the stream; independent of other items."""
    prompt_spec = prompt_spec or PromptSpec()
    scene_seed, artifact_seed, prompt_seed, spec_seed = _item_seeds(rng_seed, index)
    scene = sample_scene(cfg, scene_seed, scene_id=f"s{rng_seed:x}-{index:05d}")
    schedule = cfg.schedule()
    clean = render_clean(scene, schedule, class_textures(cfg))
    stack = apply_artifacts(clean, cfg.artifact, artifact_seed)

    rng = np.random.default_rng(spec_seed)
    counts = {}
    present = {p.class_label for p in scene.particles}
    for c in cfg.classes:
        if c.label not in present:
            continue
        avail = sum(1 for p in scene.particles if p.class_label == c.label)
        want = int(rng.integers(prompt_spec.count_range[0], prompt_spec.count_range[1] + 1))
        counts[c.label] = min(want, avail)
    zero_only = bool(rng.uniform() < prompt_spec.zero_tilt_prob)
    fraction = float(rng.choice(np.asarray(prompt_spec.fraction_choices)))
    prompts = derive_prompts(scene, schedule, counts, fraction, zero_only, prompt_seed) if counts else PromptSet(())
    return stack, scene, prompts


def generate_epoch(
    cfg: SimConfig, scenes_per_epoch: int, rng_seed: int, prompt_spec: PromptSpec | None = None
) -> Iterator[tuple[TiltSeries, Scene, PromptSet]]:
    """Lazily yield fully formed training triples, deterministic per (seed, index)."""
    for k in range(scenes_per_epoch):
        yield make_training_item(cfg, rng_seed, k, prompt_spec)

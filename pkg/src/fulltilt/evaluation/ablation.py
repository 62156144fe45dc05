"""Inference runner and the ablation harnesses: tilt-count reduction,
prompt-projection reduction, and the module on/off grid."""

from __future__ import annotations

import dataclasses
import time

import numpy as np
import psutil
import torch

from ..geometry import TiltSchedule, nearest_zero_tilt
from ..model.network import Detection, FullTiltNet, to_detections
from ..sim import ArtifactConfig, PromptSet, Scene, SimConfig, TiltSeries, derive_prompts
from .metrics import EvalConfig, EvalReport, detections_to_pixels, evaluate_pairs


def run_inference(
    model: FullTiltNet,
    stack: TiltSeries,
    dims,
    prompts: PromptSet | None = None,
    prototypes=None,
) -> tuple[list[Detection], float, int, dict]:
    """Forward pass with the measurement protocol pinned: wall-clock and
    resident-set peak around the model call only, data prep excluded."""
    images = torch.from_numpy(np.ascontiguousarray(stack.images))
    angles = torch.tensor(stack.schedule.angles_deg, dtype=torch.float32)
    proc = psutil.Process()
    rss_before = proc.memory_info().rss
    t0 = time.perf_counter()
    with torch.no_grad():
        output = model(images, angles, dims, prompts=prompts, prototypes=prototypes)
    runtime = time.perf_counter() - t0
    peak = max(proc.memory_info().rss, rss_before)
    dets = detections_to_pixels(to_detections(output), dims)
    return dets, runtime, peak, output


def subsample_schedule(schedule: TiltSchedule, keep_fraction: float) -> list[int]:
    """Every (1/fraction)-th tilt, phased so the nearest-zero tilt stays."""
    if keep_fraction not in (1.0, 0.5, 0.25, 0.125):
        raise ValueError("keep fraction must be one of 1, 0.5, 0.25, 0.125")
    stride = round(1.0 / keep_fraction)
    star = nearest_zero_tilt(schedule)
    indices = [i for i in range(len(schedule)) if (i - star) % stride == 0]
    if len(indices) < 2:
        raise ValueError("subsampled schedule would keep fewer than 2 tilts")
    return indices


def reduce_stack(stack: TiltSeries, indices: list[int]) -> TiltSeries:
    return TiltSeries(
        images=stack.images[indices],
        schedule=TiltSchedule(tuple(stack.schedule.angles_deg[i] for i in indices)),
        provenance=stack.provenance,
    )


def reduce_prompts(prompts: PromptSet, indices: list[int]) -> PromptSet:
    remap = {old: new for new, old in enumerate(indices)}
    items = tuple(
        dataclasses.replace(b, tilt_index=remap[b.tilt_index])
        for b in prompts.items
        if b.tilt_index in remap
    )
    return PromptSet(items)


def ablation_tilt_reduction(
    model: FullTiltNet,
    triple: tuple[TiltSeries, Scene, PromptSet],
    keep_fraction: float,
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    stack, scene, prompts = triple
    indices = subsample_schedule(stack.schedule, keep_fraction)
    sub_stack = reduce_stack(stack, indices)
    sub_prompts = reduce_prompts(prompts, indices)
    dets, runtime, peak, _ = run_inference(model, sub_stack, scene.dims, prompts=sub_prompts)
    return evaluate_pairs(
        [(dets, list(scene.particles))], cfg, runtime, peak,
        metadata={"axis": "tilts", "keep_fraction": keep_fraction, "n_tilts": len(indices)},
    )


def ablation_prompt_reduction(
    model: FullTiltNet,
    triple: tuple[TiltSeries, Scene, PromptSet],
    selection: dict[int, int],
    projection_fraction: float = 1.0,
    zero_tilt_only: bool = False,
    rng_seed: int = 0,
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    stack, scene, _ = triple
    prompts = derive_prompts(scene, stack.schedule, selection, projection_fraction,
                             zero_tilt_only, rng_seed)
    dets, runtime, peak, _ = run_inference(model, stack, scene.dims, prompts=prompts)
    return evaluate_pairs(
        [(dets, list(scene.particles))], cfg, runtime, peak,
        metadata={
            "axis": "prompts",
            "projection_fraction": projection_fraction,
            "zero_tilt_only": zero_tilt_only,
        },
    )


MODULE_TOGGLES = ("tilt_encoder", "tilt_init", "primitives")


def module_grid(base_train_cfg) -> list[dict]:
    """The eight on/off combinations of the three ablatable modules, each as
    a ready-to-train config. Turning the primitives module off strips every
    artifact from both data regimes (training on clean renders only)."""
    from ..train.loop import TrainConfig

    cells = []
    for te in (True, False):
        for ti in (True, False):
            for prim in (True, False):
                model = dataclasses.replace(
                    base_train_cfg.model,
                    enable_tilt_encoder=te,
                    enable_tilt_init=ti,
                )
                if prim:
                    ra, rb = base_train_cfg.regime_a, base_train_cfg.regime_b
                else:
                    ra = dataclasses.replace(base_train_cfg.regime_a, artifact=ArtifactConfig())
                    rb = dataclasses.replace(base_train_cfg.regime_b, artifact=ArtifactConfig())
                cfg = TrainConfig(
                    regime_a=ra,
                    regime_b=rb,
                    model=model,
                    epochs=base_train_cfg.epochs,
                    scenes_per_epoch=base_train_cfg.scenes_per_epoch,
                    lr=base_train_cfg.lr,
                    weight_decay=base_train_cfg.weight_decay,
                    grad_clip=base_train_cfg.grad_clip,
                    seed=base_train_cfg.seed,
                    prompt_spec=base_train_cfg.prompt_spec,
                    loss=base_train_cfg.loss,
                    match=base_train_cfg.match,
                    denoising=base_train_cfg.denoising,
                )
                cells.append({
                    "tilt_encoder": te,
                    "tilt_init": ti,
                    "primitives": prim,
                    "train_cfg": cfg,
                })
    return cells


def evaluate_on_scenes(
    model: FullTiltNet,
    sim_cfg: SimConfig,
    n_scenes: int,
    rng_seed: int,
    prompts_per_class: int = 1,
    cfg: EvalConfig = EvalConfig(),
    prompt_fraction: float = 1.0,
    zero_tilt_only: bool = False,
) -> EvalReport:
    """Held-out evaluation: fresh scenes from the simulator, ground-truth
    prompts, pooled metrics. Runtime is the summed forward time."""
    from ..sim import make_training_item

    pairs = []
    runtime = 0.0
    peak = 0
    for k in range(n_scenes):
        stack, scene, _ = make_training_item(sim_cfg, rng_seed, k)
        available = {}
        for p in scene.particles:
            available[p.class_label] = available.get(p.class_label, 0) + 1
        selection = {c: min(prompts_per_class, n) for c, n in available.items()}
        if not selection:
            continue
        prompts = derive_prompts(scene, stack.schedule, selection, prompt_fraction,
                                 zero_tilt_only, rng_seed + 1000 + k)
        dets, rt, pk, _ = run_inference(model, stack, scene.dims, prompts=prompts)
        runtime += rt
        peak = max(peak, pk)
        supervised = [p for p in scene.particles if p.class_label in selection]
        pairs.append((dets, supervised))
    return evaluate_pairs(pairs, cfg, runtime, peak,
                          metadata={"n_scenes": n_scenes, "prompts_per_class": prompts_per_class,
                                    "prompt_fraction": prompt_fraction,
                                    "zero_tilt_only": zero_tilt_only})

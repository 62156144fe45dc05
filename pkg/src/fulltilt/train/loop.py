"""The training loop: per-scene steps with epoch alternation between an
artifact-light and an artifact-heavy data regime, AdamW with constant
learning rate, gradient clipping, per-epoch checkpoints, and exact resume."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..configio import (
    model_config_from_dict,
    model_config_to_dict,
    prompt_spec_from_dict,
    prompt_spec_to_dict,
    sim_config_from_dict,
    sim_config_to_dict,
)
from ..geometry import TiltSchedule, nearest_zero_tilt, normalize_box, project_particle
from ..model import ModelConfig, build_model, save_checkpoint
from ..sim import PromptSpec, Scene, SimConfig, make_training_item
from .denoising import DenoisingConfig, build_denoising_queries
from .losses import LossConfig, TrainingTargets, loss_total, matched_l1
from .matcher import MatchCostConfig


class NonFiniteLossError(RuntimeError):
    def __init__(self, batch_seed: int, step: int):
        super().__init__(f"non-finite loss at step {step} (batch seed {batch_seed})")
        self.batch_seed = batch_seed
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    regime_a: SimConfig  # artifact-light, odd epochs (first, third, ...)
    regime_b: SimConfig  # artifact-heavy, even epochs
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 30
    scenes_per_epoch: int = 200
    lr: float = 1e-4
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    seed: int = 0
    prompt_spec: PromptSpec = field(
        default_factory=lambda: PromptSpec(
            count_range=(1, 2),
            fraction_choices=(1.0, 0.5, 0.25, 0.125),
            zero_tilt_prob=0.2,
        )
    )
    loss: LossConfig = field(default_factory=LossConfig)
    match: MatchCostConfig = field(default_factory=MatchCostConfig)
    denoising: DenoisingConfig | None = field(default_factory=DenoisingConfig)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")

    def to_dict(self) -> dict:
        import dataclasses as dc

        return {
            "regime_a": sim_config_to_dict(self.regime_a),
            "regime_b": sim_config_to_dict(self.regime_b),
            "model": model_config_to_dict(self.model),
            "epochs": self.epochs,
            "scenes_per_epoch": self.scenes_per_epoch,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "grad_clip": self.grad_clip,
            "seed": self.seed,
            "prompt_spec": prompt_spec_to_dict(self.prompt_spec),
            "loss": dc.asdict(self.loss),
            "match": dc.asdict(self.match),
            "denoising": dc.asdict(self.denoising) if self.denoising else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        dn = d.get("denoising")
        if dn is not None:
            dn = DenoisingConfig(
                groups=dn.get("groups", 3),
                box_noise_scale=dn.get("box_noise_scale", 0.4),
                label_flip_prob=dn.get("label_flip_prob", 0.2),
                negative_band=tuple(dn.get("negative_band", (0.4, 0.8))),
            )
        return cls(
            regime_a=sim_config_from_dict(d["regime_a"], "regime_a"),
            regime_b=sim_config_from_dict(d["regime_b"], "regime_b"),
            model=model_config_from_dict(d.get("model", {})),
            epochs=int(d.get("epochs", 30)),
            scenes_per_epoch=int(d.get("scenes_per_epoch", 200)),
            lr=float(d.get("lr", 1e-4)),
            weight_decay=float(d.get("weight_decay", 1e-4)),
            grad_clip=float(d.get("grad_clip", 1.0)),
            seed=int(d.get("seed", 0)),
            prompt_spec=prompt_spec_from_dict(d.get("prompt_spec", {})),
            loss=LossConfig(**d.get("loss", {})),
            match=MatchCostConfig(**d.get("match", {})),
            denoising=dn,
        )


def scene_targets(scene: Scene, class_labels: list[int], schedule: TiltSchedule,
                  dtype=torch.float32) -> TrainingTargets:
    """Ground truth in normalized units for the supervised classes only."""
    label_to_idx = {c: i for i, c in enumerate(class_labels)}
    i_star = nearest_zero_tilt(schedule)
    theta_star = schedule.angles_deg[i_star]
    boxes3d, class_idx, boxes2d = [], [], []
    for p in scene.particles:
        if p.class_label not in label_to_idx:
            continue
        boxes3d.append(normalize_box(p.x, p.y, p.z, p.d, scene.dims))
        class_idx.append(label_to_idx[p.class_label])
        b = project_particle(p, theta_star, scene.dims, i_star)
        boxes2d.append((b.x / scene.dims.w, b.y / scene.dims.h, b.d / scene.dims.w, b.d / scene.dims.w))
    return TrainingTargets(
        boxes3d=torch.tensor(boxes3d, dtype=dtype).reshape(-1, 4),
        class_idx=torch.tensor(class_idx, dtype=torch.long),
        boxes2d_star=torch.tensor(boxes2d, dtype=dtype).reshape(-1, 4),
    )


def batch_seed_for(seed: int, epoch: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(epoch, index))
    return int(ss.generate_state(1, np.uint64)[0])


def train_step(model, optimizer, cfg: TrainConfig, regime: SimConfig, batch_seed: int,
               step: int) -> dict:
    stack, scene, prompts = make_training_item(regime, batch_seed, 0, cfg.prompt_spec)
    if not prompts.items:
        return {"step": step, "skipped": True, "batch_seed": batch_seed}
    t0 = time.perf_counter()
    images = torch.from_numpy(stack.images)
    angles = torch.tensor(stack.schedule.angles_deg, dtype=torch.float32)
    classes = list(prompts.classes)
    targets = scene_targets(scene, classes, stack.schedule)

    dn = None
    dn_targets = None
    if cfg.denoising is not None and targets.boxes3d.shape[0] > 0:
        built = build_denoising_queries(
            targets.boxes3d, targets.class_idx, len(classes), cfg.denoising,
            np.random.default_rng(batch_seed + 1),
        )
        if built is not None:
            dn, dn_targets = built

    output = model(images, angles, scene.dims, prompts=prompts, denoising=dn)
    loss, components = loss_total(output, targets, cfg.match, cfg.loss, dn_targets)
    if not torch.isfinite(loss):
        raise NonFiniteLossError(batch_seed, step)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if cfg.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    optimizer.step()

    record = {
        "step": step,
        "batch_seed": batch_seed,
        "time_s": round(time.perf_counter() - t0, 4),
        "matched_l1": matched_l1(output, targets, cfg.match),
        "gt_count": int(targets.boxes3d.shape[0]),
    }
    record.update({f"loss_{k}": v for k, v in components.items()})
    return record


def train_epoch(model, optimizer, cfg: TrainConfig, epoch: int, sink=None) -> list[dict]:
    """One pass over scenes_per_epoch fresh scenes; epoch parity picks the
    data regime (first epoch is the artifact-light one)."""
    regime = cfg.regime_a if epoch % 2 == 0 else cfg.regime_b
    model.train()
    records = []
    for k in range(cfg.scenes_per_epoch):
        step = epoch * cfg.scenes_per_epoch + k
        seed = batch_seed_for(cfg.seed, epoch, k)
        rec = train_step(model, optimizer, cfg, regime, seed, step)
        rec["epoch"] = epoch
        records.append(rec)
        if sink is not None:
            sink(rec)
    return records


def train(cfg: TrainConfig, out_dir: str, resume: bool = False,
          max_epochs: int | None = None, log=None) -> Path:
    """Full run: checkpoints every epoch, metrics as JSON lines, exact
    optimizer-state resume from the last completed epoch."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state_path = out / "train_state.pt"
    metrics_path = out / "metrics.jsonl"
    ckpt_path = out / "model.ckpt"

    torch.manual_seed(cfg.seed)
    model = build_model(cfg.model)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    start_epoch = 0
    if resume and state_path.exists():
        state = torch.load(state_path, weights_only=False)
        model.load_state_dict(state["model"])
        optimizer.load_state_dict(state["optimizer"])
        start_epoch = state["epoch"] + 1

    (out / "train_config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    save_checkpoint(str(ckpt_path), model)

    end_epoch = cfg.epochs if max_epochs is None else min(cfg.epochs, start_epoch + max_epochs)
    for epoch in range(start_epoch, end_epoch):
        with metrics_path.open("a") as fh:
            def sink(rec):
                fh.write(json.dumps(rec) + "\n")
                fh.flush()

            records = train_epoch(model, optimizer, cfg, epoch, sink)
        save_checkpoint(str(out / f"epoch_{epoch:03d}.ckpt"), model)
        save_checkpoint(str(ckpt_path), model)
        tmp = str(state_path) + ".tmp"
        torch.save({"model": model.state_dict(), "optimizer": optimizer.state_dict(),
                    "epoch": epoch}, tmp)
        Path(tmp).replace(state_path)
        if log:
            losses = [r.get("loss_total") for r in records if "loss_total" in r]
            mean = sum(losses) / max(len(losses), 1)
            log(f"epoch {epoch}: mean loss {mean:.4f} over {len(records)} steps")
    return ckpt_path


def run_overfit_smoke(
    steps: int = 500,
    early_stop_l1: float | None = None,
    model_cfg: ModelConfig | None = None,
    sim_cfg: SimConfig | None = None,
    seed: int = 0,
    log=None,
) -> dict:
    """Sanity loop on one fixed scene; reports the final matched L1.

    ``early_stop_l1`` ends the loop once the matched L1 stays under the bar
    for three consecutive steps.
    """
    from ..geometry import TomogramDims
    from ..sim import ClassSpec

    model_cfg = model_cfg or ModelConfig()
    sim_cfg = sim_cfg or SimConfig(
        dims=TomogramDims(64, 64, 64),
        particles_per_scene=(4, 6),
        classes=(ClassSpec(1, 8, 12, "disc"), ClassSpec(2, 10, 14, "ring")),
    )
    cfg = TrainConfig(regime_a=sim_cfg, regime_b=sim_cfg, model=model_cfg,
                      seed=seed, denoising=DenoisingConfig())
    torch.manual_seed(seed)
    model = build_model(model_cfg)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    stack, scene, prompts = make_training_item(sim_cfg, seed, 0, PromptSpec((1, 1)))
    images = torch.from_numpy(stack.images)
    angles = torch.tensor(stack.schedule.angles_deg, dtype=torch.float32)
    classes = list(prompts.classes)
    targets = scene_targets(scene, classes, stack.schedule)

    t0 = time.perf_counter()
    model.train()
    last_l1 = float("inf")
    below = 0
    steps_run = 0
    for step in range(steps):
        dn_built = build_denoising_queries(
            targets.boxes3d, targets.class_idx, len(classes),
            cfg.denoising, np.random.default_rng(seed + step),
        )
        dn, dn_targets = dn_built if dn_built else (None, None)
        output = model(images, angles, scene.dims, prompts=prompts, denoising=dn)
        loss, _ = loss_total(output, targets, cfg.match, cfg.loss, dn_targets)
        if not torch.isfinite(loss):
            raise NonFiniteLossError(seed + step, step)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()
        last_l1 = matched_l1(output, targets, cfg.match)
        steps_run = step + 1
        if log and step % 25 == 0:
            log(f"step {step}: matched_l1 {last_l1:.4f}")
        if early_stop_l1 is not None:
            below = below + 1 if last_l1 < early_stop_l1 else 0
            if below >= 3:
                break
    return {
        "final_matched_l1": last_l1,
        "steps_run": steps_run,
        "seconds": time.perf_counter() - t0,
    }

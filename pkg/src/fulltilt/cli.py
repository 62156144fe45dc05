"""Command-line entry points.

Exit codes: 0 success, 2 bad config or schema, 3 non-finite training loss,
4 prototype/model hash mismatch, 5 scene mismatch during evaluation.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import formats
from .configio import ConfigError, load_sim_config
from .evaluation import (
    EvalConfig,
    ablation_prompt_reduction,
    ablation_tilt_reduction,
    evaluate_pairs,
    module_grid,
    run_inference,
)
from .sim import class_textures, make_training_item

EXIT_SCHEMA = 2
EXIT_NONFINITE = 3
EXIT_HASH = 4
EXIT_SCENE = 5


@click.group()
def main():
    """Tilt-series particle detection: simulate, train, infer, evaluate, serve."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--scenes", "n_scenes", default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--force", is_flag=True, help="overwrite an existing output directory")
def gen(config_path, n_scenes, out_dir, seed, force):
    """Generate scene triples (tilt stack, ground truth, prompts)."""
    try:
        cfg = load_sim_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        click.echo(f"{out} exists and is not empty; use --force", err=True)
        sys.exit(EXIT_SCHEMA)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(n_scenes):
        stack, scene, prompts = make_training_item(cfg, seed, k)
        scene_dir = out / f"scene_{k:03d}"
        formats.write_tiltstack(scene_dir, stack)
        formats.write_scene(scene_dir / "scene.json", scene)
        formats.write_prompts(scene_dir / "prompts.json", prompts)
        (scene_dir / "textures.json").write_text(json.dumps(class_textures(cfg)))
        click.echo(f"wrote {scene_dir} ({len(scene.particles)} particles)")


@main.command()
@click.option("--train-config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", is_flag=True)
@click.option("--epochs", "epochs_override", default=None, type=int,
              help="override the configured epoch count")
def train(config_path, out_dir, resume, epochs_override):
    """Train a detector; checkpoints every epoch, metrics as JSON lines."""
    from .train import NonFiniteLossError, TrainConfig
    from .train import train as run_train

    try:
        with open(config_path) as fh:
            cfg = TrainConfig.from_dict(json.load(fh))
        if epochs_override is not None:
            cfg = dataclasses.replace(cfg, epochs=epochs_override)
    except (ConfigError, ValueError, KeyError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    try:
        path = run_train(cfg, out_dir, resume=resume, log=click.echo)
    except NonFiniteLossError as exc:
        click.echo(f"aborted: {exc}", err=True)
        sys.exit(EXIT_NONFINITE)
    click.echo(f"checkpoint: {path}")


def _load_model_or_exit(ckpt_path):
    from .model import load_checkpoint

    try:
        return load_checkpoint(ckpt_path)
    except Exception as exc:
        click.echo(f"cannot load checkpoint: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)


def _dims_from_scene_or_stack(stack, scene_path):
    from .geometry import TomogramDims

    if scene_path:
        return formats.read_scene(scene_path).dims
    n, h, w = stack.images.shape
    return TomogramDims(w, h, w)  # cubic volume assumption when no scene given


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--tilts", "tilts_dir", required=True, type=click.Path(exists=True))
@click.option("--prompts", "prompts_path", default=None, type=click.Path(exists=True))
@click.option("--prototypes", "proto_path", default=None, type=click.Path(exists=True))
@click.option("--scene", "scene_path", default=None, type=click.Path(exists=True),
              help="scene file supplying volume dims (defaults to a cubic volume)")
@click.option("--out", "out_path", required=True, type=click.Path())
def infer(ckpt, tilts_dir, prompts_path, proto_path, scene_path, out_path):
    """Detect particles in a tilt stack from prompts or saved prototypes."""
    from .model import checkpoint_hash

    if (prompts_path is None) == (proto_path is None):
        click.echo("provide exactly one of --prompts / --prototypes", err=True)
        sys.exit(EXIT_SCHEMA)
    model = _load_model_or_exit(ckpt)
    model_hash = checkpoint_hash(ckpt)
    try:
        stack = formats.read_tiltstack(tilts_dir)
        dims = _dims_from_scene_or_stack(stack, scene_path)
        if prompts_path:
            prompts = formats.read_prompts(prompts_path)
            dets, runtime, peak, _ = run_inference(model, stack, dims, prompts=prompts)
        else:
            vectors, labels, _, proto_hash = formats.read_prototypes(proto_path)
            if proto_hash != model_hash:
                click.echo(
                    f"prototype hash {proto_hash[:12]} does not match model {model_hash[:12]}",
                    err=True,
                )
                sys.exit(EXIT_HASH)
            import torch

            dets, runtime, peak, _ = run_inference(
                model, stack, dims, prototypes=(torch.from_numpy(vectors), labels)
            )
    except formats.FormatError as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    formats.write_detections(out_path, dets, runtime, peak, model_hash)
    click.echo(f"wrote {out_path} ({len(dets)} detections, {runtime:.3f}s)")


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--factors", default="0.5,1.0", show_default=True)
@click.option("--score-threshold", default=0.3, show_default=True)
@click.option("--scene-id", default=None, help="require the gt scene to carry this id")
def eval_cmd(pred_path, gt_path, out_path, factors, score_threshold, scene_id):
    """Score detections against ground truth."""
    try:
        scene = formats.read_scene(gt_path)
        dets, meta = formats.read_detections(pred_path, scene.dims)
        radius_factors = tuple(float(f) for f in factors.split(","))
        cfg = EvalConfig(radius_factors=radius_factors, f1_score_threshold=score_threshold)
    except (formats.FormatError, ValueError) as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    if scene_id is not None and scene.scene_id != scene_id:
        click.echo(f"scene mismatch: expected {scene_id}, file has {scene.scene_id}", err=True)
        sys.exit(EXIT_SCENE)
    report = evaluate_pairs([(dets, list(scene.particles))], cfg,
                            runtime_s=meta["runtime_s"], peak_mem_bytes=meta["peak_mem_bytes"],
                            metadata={"flags": meta["flags"]})
    Path(out_path).write_text(json.dumps(report.to_dict(), indent=2))
    for f in radius_factors:
        click.echo(f"mAP@{f}r: {report.map_per_factor[f]:.4f}")
    click.echo(f"F1: {report.f1:.4f} (tp={report.tp} fp={report.fp} fn={report.fn})")


@main.command("export-prototypes")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--tilts", "tilts_dir", required=True, type=click.Path(exists=True))
@click.option("--prompts", "prompts_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def export_prototypes(ckpt, tilts_dir, prompts_path, scene_path, out_path):
    """Run the prompt encoder and save the class prototypes for reuse."""
    from .model import checkpoint_hash

    model = _load_model_or_exit(ckpt)
    try:
        stack = formats.read_tiltstack(tilts_dir)
        prompts = formats.read_prompts(prompts_path)
        dims = _dims_from_scene_or_stack(stack, scene_path)
    except formats.FormatError as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    _, _, _, output = run_inference(model, stack, dims, prompts=prompts)
    formats.write_prototypes(
        out_path,
        output["prototypes"].detach().numpy(),
        output["class_labels"],
        source_scene=stack.provenance,
        model_hash=checkpoint_hash(ckpt),
    )
    click.echo(f"wrote {out_path} ({len(output['class_labels'])} classes)")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="directory of generated scene triples")
@click.option("--axis", type=click.Choice(["tilts", "prompts", "modules"]), required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--prompts-per-class", default=1, show_default=True)
@click.option("--train-config", "train_config_path", default=None, type=click.Path(exists=True),
              help="base training config for --axis modules")
@click.option("--eval-scenes", default=8, show_default=True,
              help="held-out scenes per cell for --axis modules")
def ablate(ckpt, data_dir, axis, out_path, prompts_per_class, train_config_path, eval_scenes):
    """Ablation harnesses; emits one CSV row per configuration."""
    rows = []
    if axis in ("tilts", "prompts"):
        model = _load_model_or_exit(ckpt)
        triples = _load_triples(data_dir)
        if axis == "tilts":
            for fraction in (1.0, 0.5, 0.25, 0.125):
                reports = [ablation_tilt_reduction(model, t, fraction) for t in triples]
                rows.append(_summary_row({"keep_fraction": fraction}, reports))
        else:
            for fraction, zero_only in ((1.0, False), (0.5, False), (0.25, False),
                                        (0.125, False), (1.0, True)):
                reports = [
                    ablation_prompt_reduction(
                        model, t, _selection(t[1], prompts_per_class), fraction, zero_only,
                        rng_seed=11,
                    )
                    for t in triples
                ]
                label = "zero_tilt_only" if zero_only else f"fraction_{fraction}"
                rows.append(_summary_row({"projections": label}, reports))
    else:
        if train_config_path is None:
            click.echo("--axis modules requires --train-config", err=True)
            sys.exit(EXIT_SCHEMA)
        from .evaluation import evaluate_on_scenes
        from .model import build_model
        from .train import TrainConfig
        from .train import train as run_train

        with open(train_config_path) as fh:
            base = TrainConfig.from_dict(json.load(fh))
        out_root = Path(out_path).with_suffix("")
        for cell in module_grid(base):
            tag = "".join(
                name[0].upper() if cell[name] else "-" for name in ("tilt_encoder", "tilt_init", "primitives")
            )
            run_dir = out_root.parent / f"{out_root.name}_cell_{tag}"
            ckpt_path = run_train(cell["train_cfg"], str(run_dir), log=None)
            from .model import load_checkpoint

            trained = load_checkpoint(str(ckpt_path))
            report = evaluate_on_scenes(trained, base.regime_b, eval_scenes,
                                        rng_seed=base.seed + 90000,
                                        prompts_per_class=prompts_per_class)
            rows.append(_summary_row(
                {"tilt_encoder": cell["tilt_encoder"], "tilt_init": cell["tilt_init"],
                 "primitives": cell["primitives"]},
                [report],
            ))
    _write_csv(out_path, rows)
    click.echo(f"wrote {out_path} ({len(rows)} rows)")


def _selection(scene, prompts_per_class):
    counts = {}
    for p in scene.particles:
        counts[p.class_label] = counts.get(p.class_label, 0) + 1
    return {c: min(prompts_per_class, n) for c, n in counts.items()}


def _load_triples(data_dir):
    triples = []
    for scene_dir in sorted(Path(data_dir).glob("scene_*")):
        stack = formats.read_tiltstack(scene_dir)
        scene = formats.read_scene(scene_dir / "scene.json")
        prompts = formats.read_prompts(scene_dir / "prompts.json")
        triples.append((stack, scene, prompts))
    if not triples:
        raise click.ClickException(f"no scene_* directories under {data_dir}")
    return triples


def _summary_row(keys: dict, reports) -> dict:
    row = dict(keys)
    n = len(reports)
    factors = reports[0].map_per_factor.keys()
    for f in factors:
        row[f"map@{f}r"] = sum(r.map_per_factor[f] for r in reports) / n
    row["f1"] = sum(r.f1 for r in reports) / n
    row["runtime_s"] = sum(r.runtime_s for r in reports) / n
    row["peak_mem_bytes"] = max(r.peak_mem_bytes for r in reports)
    return row


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", default=None, type=click.Path(exists=True),
              envvar="FULLTILT_DATA_DIR", show_envvar=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(ckpt, data_dir, port, host):
    """Serve the HTTP API (and the prompting UI if built) over a data directory."""
    import uvicorn

    from .service import create_app

    if data_dir is None:
        click.echo("provide --data or set FULLTILT_DATA_DIR", err=True)
        sys.exit(EXIT_SCHEMA)
    app = create_app(ckpt, data_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()

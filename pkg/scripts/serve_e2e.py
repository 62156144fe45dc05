#!/usr/bin/env python3
"""Start a throwaway service instance for the UI end-to-end test: generates
one small scene, builds a small untrained checkpoint, serves on the given
port until killed."""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

import torch  # noqa: E402

torch.set_num_threads(1)

from fulltilt import formats  # noqa: E402
from fulltilt.geometry import TomogramDims  # noqa: E402
from fulltilt.model import ModelConfig, build_model, save_checkpoint  # noqa: E402
from fulltilt.sim import ClassSpec, SimConfig, make_training_item  # noqa: E402


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--data", default=None, help="reuse an existing data dir")
    parser.add_argument("--ckpt", default=None, help="reuse an existing checkpoint")
    args = parser.parse_args()

    if args.data and args.ckpt:
        data_dir, ckpt_path = args.data, args.ckpt
    else:
        tmp = Path(tempfile.mkdtemp(prefix="fulltilt-e2e-"))
        sim = SimConfig(
            dims=TomogramDims(32, 32, 32),
            tilt_min=-30, tilt_max=30, tilt_step=15,
            particles_per_scene=(3, 4),
            classes=(ClassSpec(1, 6, 9, "disc"),),
        )
        data_dir = tmp / "data"
        data_dir.mkdir()
        stack, scene, prompts = make_training_item(sim, 7, 0)
        scene_dir = data_dir / "scene_000"
        formats.write_tiltstack(scene_dir, stack)
        formats.write_scene(scene_dir / "scene.json", scene)
        formats.write_prompts(scene_dir / "prompts.json", prompts)
        ckpt_path = tmp / "model.ckpt"
        cfg = ModelConfig(c=16, l_aa=1, l_vp=1, l_d=1, m=4, n_levels=1, strides=(4,),
                          n_heads=2, n_points=2, seed=1)
        save_checkpoint(str(ckpt_path), build_model(cfg))
        data_dir, ckpt_path = str(data_dir), str(ckpt_path)

    import uvicorn

    from fulltilt.service import create_app

    app = create_app(ckpt_path, data_dir)
    print(f"E2E_READY port={args.port}", flush=True)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()

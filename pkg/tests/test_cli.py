import json
from pathlib import Path

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from fulltilt import formats
from fulltilt.cli import main
from fulltilt.geometry import TomogramDims
from fulltilt.model import ModelConfig, build_model, save_checkpoint
from fulltilt.sim import ArtifactConfig, ClassSpec, SimConfig
from fulltilt.train import TrainConfig
from fulltilt.configio import sim_config_to_dict

TINY_MODEL = ModelConfig(c=16, l_aa=1, l_vp=1, l_d=1, m=4, n_levels=1, strides=(4,),
                         n_heads=2, n_points=2, seed=3)


def tiny_sim(with_artifacts=False):
    return SimConfig(
        dims=TomogramDims(16, 16, 16),
        tilt_min=-30, tilt_max=30, tilt_step=15,
        particles_per_scene=(2, 3),
        classes=(ClassSpec(1, 4, 6, "disc"),),
        artifact=ArtifactConfig(noise_sigma=0.05) if with_artifacts else ArtifactConfig(),
    )


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def sim_json(tmp_path):
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(sim_config_to_dict(tiny_sim())))
    return str(path)


@pytest.fixture()
def ckpt(tmp_path):
    model = build_model(TINY_MODEL)
    path = tmp_path / "model.ckpt"
    save_checkpoint(str(path), model)
    return str(path)


@pytest.fixture()
def data_dir(runner, sim_json, tmp_path):
    out = tmp_path / "data"
    result = runner.invoke(main, ["gen", "--config", sim_json, "--scenes", "2",
                                  "--out", str(out), "--seed", "5"])
    assert result.exit_code == 0, result.output
    return out


class TestGen:
    def test_writes_valid_triples(self, runner, sim_json, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ["gen", "--config", sim_json, "--scenes", "3",
                                      "--out", str(out), "--seed", "1"])
        assert result.exit_code == 0, result.output
        dirs = sorted(out.glob("scene_*"))
        assert len(dirs) == 3
        for d in dirs:
            stack = formats.read_tiltstack(d)
            scene = formats.read_scene(d / "scene.json")
            prompts = formats.read_prompts(d / "prompts.json")
            assert stack.images.shape[0] == 5
            assert len(scene.particles) >= 1
            assert len(prompts.items) >= 1

    def test_deterministic_bytes(self, runner, sim_json, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            result = runner.invoke(main, ["gen", "--config", sim_json, "--scenes", "1",
                                          "--out", str(out), "--seed", "7"])
            assert result.exit_code == 0
        bytes_a = (a / "scene_000" / "stack.f32").read_bytes()
        bytes_b = (b / "scene_000" / "stack.f32").read_bytes()
        assert bytes_a == bytes_b

    def test_invalid_config_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"dims": {"w": 16}}')
        result = runner.invoke(main, ["gen", "--config", str(bad), "--scenes", "1",
                                      "--out", str(tmp_path / "x")])
        assert result.exit_code == 2
        assert "sim." in result.output  # error names the schema path

    def test_refuses_overwrite_without_force(self, runner, sim_json, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / "sentinel").write_text("x")
        result = runner.invoke(main, ["gen", "--config", sim_json, "--scenes", "1",
                                      "--out", str(out)])
        assert result.exit_code == 2
        result = runner.invoke(main, ["gen", "--config", sim_json, "--scenes", "1",
                                      "--out", str(out), "--force"])
        assert result.exit_code == 0


class TestTrainCli:
    def make_config(self, tmp_path, epochs=1):
        cfg = TrainConfig(regime_a=tiny_sim(), regime_b=tiny_sim(True), model=TINY_MODEL,
                          epochs=epochs, scenes_per_epoch=2, seed=1)
        path = tmp_path / "train.json"
        path.write_text(json.dumps(cfg.to_dict()))
        return str(path)

    def test_zero_epochs_initial_checkpoint_only(self, runner, tmp_path):
        cfg_path = self.make_config(tmp_path, epochs=0)
        out = tmp_path / "run"
        result = runner.invoke(main, ["train", "--train-config", cfg_path, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "model.ckpt").exists()
        assert not (out / "metrics.jsonl").exists()

    def test_metrics_lines_equal_steps(self, runner, tmp_path):
        cfg_path = self.make_config(tmp_path, epochs=2)
        out = tmp_path / "run"
        result = runner.invoke(main, ["train", "--train-config", cfg_path, "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = (out / "metrics.jsonl").read_text().strip().splitlines()
        assert len(lines) == 4

    def test_bad_config_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        result = runner.invoke(main, ["train", "--train-config", str(path),
                                      "--out", str(tmp_path / "x")])
        assert result.exit_code == 2


class TestInferCli:
    def test_prompt_and_prototype_paths_agree(self, runner, ckpt, data_dir, tmp_path):
        scene_dir = data_dir / "scene_000"
        proto_path = tmp_path / "p.json"
        result = runner.invoke(main, [
            "export-prototypes", "--ckpt", ckpt, "--tilts", str(scene_dir),
            "--prompts", str(scene_dir / "prompts.json"),
            "--scene", str(scene_dir / "scene.json"), "--out", str(proto_path)])
        assert result.exit_code == 0, result.output

        out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
        result = runner.invoke(main, [
            "infer", "--ckpt", ckpt, "--tilts", str(scene_dir),
            "--prompts", str(scene_dir / "prompts.json"),
            "--scene", str(scene_dir / "scene.json"), "--out", str(out_a)])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, [
            "infer", "--ckpt", ckpt, "--tilts", str(scene_dir),
            "--prototypes", str(proto_path),
            "--scene", str(scene_dir / "scene.json"), "--out", str(out_b)])
        assert result.exit_code == 0, result.output

        dets_a, _ = formats.read_detections(out_a)
        dets_b, _ = formats.read_detections(out_b)
        for da, db in zip(dets_a, dets_b):
            assert abs(da.x - db.x) < 1e-5
            assert abs(da.score - db.score) < 1e-6

    def test_requires_exactly_one_source(self, runner, ckpt, data_dir, tmp_path):
        scene_dir = data_dir / "scene_000"
        result = runner.invoke(main, ["infer", "--ckpt", ckpt, "--tilts", str(scene_dir),
                                      "--out", str(tmp_path / "o.json")])
        assert result.exit_code == 2

    def test_hash_mismatch_exits_4(self, runner, ckpt, data_dir, tmp_path):
        scene_dir = data_dir / "scene_000"
        rng = np.random.default_rng(0)
        formats.write_prototypes(tmp_path / "p.json", rng.normal(size=(1, 16)), [1],
                                 "s", "not-the-right-hash")
        result = runner.invoke(main, [
            "infer", "--ckpt", ckpt, "--tilts", str(scene_dir),
            "--prototypes", str(tmp_path / "p.json"), "--out", str(tmp_path / "o.json")])
        assert result.exit_code == 4

    def test_output_schema_valid(self, runner, ckpt, data_dir, tmp_path):
        scene_dir = data_dir / "scene_000"
        out = tmp_path / "dets.json"
        result = runner.invoke(main, [
            "infer", "--ckpt", ckpt, "--tilts", str(scene_dir),
            "--prompts", str(scene_dir / "prompts.json"),
            "--scene", str(scene_dir / "scene.json"), "--out", str(out)])
        assert result.exit_code == 0
        dets, meta = formats.read_detections(out)
        assert len(dets) == TINY_MODEL.m
        assert meta["model_hash"]


class TestEvalCli:
    def test_perfect_detections_score_one(self, runner, data_dir, tmp_path):
        scene_dir = data_dir / "scene_000"
        scene = formats.read_scene(scene_dir / "scene.json")
        from fulltilt.model.network import Detection

        dets = [Detection(p.x, p.y, p.z, p.d, p.class_label, 1.0) for p in scene.particles]
        formats.write_detections(tmp_path / "d.json", dets, 0.1, 0, "h")
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["eval", "--pred", str(tmp_path / "d.json"),
                                      "--gt", str(scene_dir / "scene.json"),
                                      "--out", str(out), "--factors", "0.5,1.0"])
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert report["map_per_factor"]["0.5"] == 1.0
        assert report["map_per_factor"]["1.0"] == 1.0
        assert report["tp"] + report["fn"] == report["gt_count"]

    def test_factors_flag_parsed(self, runner, data_dir, tmp_path):
        scene_dir = data_dir / "scene_000"
        formats.write_detections(tmp_path / "d.json", [], 0, 0, "h")
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["eval", "--pred", str(tmp_path / "d.json"),
                                      "--gt", str(scene_dir / "scene.json"),
                                      "--out", str(out), "--factors", "0.25,0.75"])
        assert result.exit_code == 0
        report = json.loads(out.read_text())
        assert set(report["map_per_factor"]) == {"0.25", "0.75"}

    def test_scene_mismatch_exits_5(self, runner, data_dir, tmp_path):
        scene_dir = data_dir / "scene_000"
        formats.write_detections(tmp_path / "d.json", [], 0, 0, "h")
        result = runner.invoke(main, ["eval", "--pred", str(tmp_path / "d.json"),
                                      "--gt", str(scene_dir / "scene.json"),
                                      "--out", str(tmp_path / "r.json"),
                                      "--scene-id", "other-scene"])
        assert result.exit_code == 5


class TestAblateCli:
    def test_tilts_axis_emits_4_rows(self, runner, ckpt, tmp_path):
        # 17 tilts so the 12.5% subsample still keeps >= 2 images
        sim = tiny_sim()
        import dataclasses

        sim = dataclasses.replace(sim, tilt_step=3.75)
        sim_path = tmp_path / "sim17.json"
        sim_path.write_text(json.dumps(sim_config_to_dict(sim)))
        data = tmp_path / "data17"
        result = runner.invoke(main, ["gen", "--config", str(sim_path), "--scenes", "1",
                                      "--out", str(data), "--seed", "3"])
        assert result.exit_code == 0, result.output
        out = tmp_path / "grid.csv"
        result = runner.invoke(main, ["ablate", "--ckpt", ckpt, "--data", str(data),
                                      "--axis", "tilts", "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 5  # header + 4

    def test_prompts_axis_reports_fraction(self, runner, ckpt, data_dir, tmp_path):
        out = tmp_path / "grid.csv"
        result = runner.invoke(main, ["ablate", "--ckpt", ckpt, "--data", str(data_dir),
                                      "--axis", "prompts", "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 6  # header + 4 fractions + zero-tilt-only
        assert "zero_tilt_only" in rows[-1]

    def test_modules_axis_emits_8_rows(self, runner, tmp_path):
        cfg = TrainConfig(regime_a=tiny_sim(), regime_b=tiny_sim(True), model=TINY_MODEL,
                          epochs=1, scenes_per_epoch=1, seed=2)
        cfg_path = tmp_path / "t.json"
        cfg_path.write_text(json.dumps(cfg.to_dict()))
        dummy_ckpt = tmp_path / "dummy.ckpt"
        save_checkpoint(str(dummy_ckpt), build_model(TINY_MODEL))
        out = tmp_path / "grid.csv"
        result = runner.invoke(main, ["ablate", "--ckpt", str(dummy_ckpt),
                                      "--data", str(tmp_path), "--axis", "modules",
                                      "--out", str(out), "--train-config", str(cfg_path),
                                      "--eval-scenes", "1"])
        assert result.exit_code == 0, result.output
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 9  # header + 8 cells

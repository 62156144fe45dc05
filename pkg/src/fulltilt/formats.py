"""On-disk formats: a raw-float tilt stack with JSON sidecar, and JSON files
for scenes, prompts, detections, and prototypes. All coordinates in pixels;
floats survive write-read bit-identically (raw bytes for image data, repr
round-trip for JSON doubles)."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .geometry import Box2D, Particle3D, TiltSchedule, TomogramDims
from .model.network import Detection
from .sim import PromptSet, Scene, TiltSeries

STACK_VERSION = 1


class FormatError(ValueError):
    """Schema violation; the message names the offending field path."""


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise FormatError(f"{where}.{key}: missing")
    return d[key]


# --- tilt stack (directory: meta.json + stack.f32) ---

def write_tiltstack(directory: str | Path, stack: TiltSeries) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, h, w = stack.images.shape
    meta = {
        "version": STACK_VERSION,
        "n": n,
        "h": h,
        "w": w,
        "dtype": "f32le",
        "angles_deg": list(stack.schedule.angles_deg),
        "provenance": stack.provenance,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    data = np.ascontiguousarray(stack.images, dtype="<f4")
    (directory / "stack.f32").write_bytes(data.tobytes())


def read_tiltstack(directory: str | Path) -> TiltSeries:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise FormatError(f"{directory}/meta.json: missing")
    meta = json.loads(meta_path.read_text())
    n = int(_need(meta, "n", "meta"))
    h = int(_need(meta, "h", "meta"))
    w = int(_need(meta, "w", "meta"))
    if _need(meta, "dtype", "meta") != "f32le":
        raise FormatError("meta.dtype: only f32le supported")
    angles = _need(meta, "angles_deg", "meta")
    if len(angles) != n:
        raise FormatError(f"meta.angles_deg: {len(angles)} angles for {n} images")
    raw = (directory / "stack.f32").read_bytes()
    expected = n * h * w * 4
    if len(raw) != expected:
        raise FormatError(f"stack.f32: size {len(raw)} != n*h*w*4 = {expected}")
    images = np.frombuffer(raw, dtype="<f4").reshape(n, h, w).copy()
    return TiltSeries(images=images, schedule=TiltSchedule(tuple(angles)),
                      provenance=meta.get("provenance", "external"))


# --- scene ---

def write_scene(path: str | Path, scene: Scene) -> None:
    doc = {
        "dims": {"w": scene.dims.w, "h": scene.dims.h, "d": scene.dims.d},
        "particles": [
            {"x": p.x, "y": p.y, "z": p.z, "d": p.d, "class": p.class_label}
            for p in scene.particles
        ],
        "scene_id": scene.scene_id,
        "seed": scene.seed,
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def read_scene(path: str | Path) -> Scene:
    doc = json.loads(Path(path).read_text())
    dims_doc = _need(doc, "dims", "scene")
    dims = TomogramDims(int(_need(dims_doc, "w", "scene.dims")),
                        int(_need(dims_doc, "h", "scene.dims")),
                        int(_need(dims_doc, "d", "scene.dims")))
    particles = []
    for i, p in enumerate(_need(doc, "particles", "scene")):
        where = f"scene.particles[{i}]"
        particle = Particle3D(
            float(_need(p, "x", where)), float(_need(p, "y", where)),
            float(_need(p, "z", where)), float(_need(p, "d", where)),
            int(_need(p, "class", where)),
        )
        if not (0 <= particle.x <= dims.w and 0 <= particle.y <= dims.h
                and 0 <= particle.z <= dims.d):
            raise FormatError(f"{where}: center outside declared dims")
        particles.append(particle)
    return Scene(dims=dims, particles=tuple(particles),
                 scene_id=doc.get("scene_id", Path(path).stem),
                 seed=int(doc.get("seed", 0)))


# --- prompts ---

def write_prompts(path: str | Path, prompts: PromptSet) -> None:
    doc = {
        "items": [
            {"tilt_index": b.tilt_index, "x": b.x, "y": b.y, "d": b.d, "class": b.class_label}
            for b in prompts.items
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def read_prompts(path: str | Path) -> PromptSet:
    doc = json.loads(Path(path).read_text())
    items = []
    for i, b in enumerate(_need(doc, "items", "prompts")):
        where = f"prompts.items[{i}]"
        try:
            items.append(Box2D(
                tilt_index=int(_need(b, "tilt_index", where)),
                x=float(_need(b, "x", where)),
                y=float(_need(b, "y", where)),
                d=float(_need(b, "d", where)),
                class_label=int(_need(b, "class", where)),
            ))
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from exc
        if items[-1].tilt_index < 0:
            raise FormatError(f"{where}.tilt_index: negative")
    return PromptSet(tuple(items))


# --- detections ---

def write_detections(path: str | Path, dets: list[Detection], runtime_s: float,
                     peak_mem_bytes: int, model_hash: str) -> None:
    doc = detections_doc(dets, runtime_s, peak_mem_bytes, model_hash)
    Path(path).write_text(json.dumps(doc, indent=2))


def detections_doc(dets: list[Detection], runtime_s: float, peak_mem_bytes: int,
                   model_hash: str) -> dict:
    return {
        "items": [
            {"x": d.x, "y": d.y, "z": d.z, "d": d.d, "class": d.class_label, "score": d.score}
            for d in dets
        ],
        "runtime_s": runtime_s,
        "peak_mem_bytes": peak_mem_bytes,
        "model_hash": model_hash,
    }


def read_detections(path: str | Path, dims: TomogramDims | None = None):
    """Returns (detections, meta). Out-of-volume centers beyond half a
    diameter are flagged in meta["flags"], not rejected."""
    doc = json.loads(Path(path).read_text())
    dets = []
    flags = []
    for i, item in enumerate(_need(doc, "items", "detections")):
        where = f"detections.items[{i}]"
        det = Detection(
            x=float(_need(item, "x", where)), y=float(_need(item, "y", where)),
            z=float(_need(item, "z", where)), d=float(_need(item, "d", where)),
            class_label=int(_need(item, "class", where)),
            score=float(_need(item, "score", where)),
        )
        if not 0 <= det.score <= 1:
            raise FormatError(f"{where}.score: {det.score} outside [0, 1]")
        if dims is not None:
            slack = det.d / 2
            if (det.x < -slack or det.x > dims.w + slack
                    or det.y < -slack or det.y > dims.h + slack
                    or det.z < -slack or det.z > dims.d + slack):
                flags.append(f"{where}: center outside dims by more than d/2")
        dets.append(det)
    meta = {
        "runtime_s": float(doc.get("runtime_s", 0.0)),
        "peak_mem_bytes": int(doc.get("peak_mem_bytes", 0)),
        "model_hash": doc.get("model_hash", ""),
        "flags": flags,
    }
    return dets, meta


# --- prototypes ---

def write_prototypes(path: str | Path, vectors, class_labels: list[int],
                     source_scene: str, model_hash: str) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    doc = {
        "C": int(vectors.shape[1]),
        "classes": [
            {"label": int(label), "vector": [float(v) for v in vectors[i]]}
            for i, label in enumerate(class_labels)
        ],
        "source_scene": source_scene,
        "model_hash": model_hash,
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def read_prototypes(path: str | Path):
    """Returns (vectors float32 (Nc, C), labels, source_scene, model_hash)."""
    doc = json.loads(Path(path).read_text())
    c = int(_need(doc, "C", "prototypes"))
    labels, rows = [], []
    for i, entry in enumerate(_need(doc, "classes", "prototypes")):
        where = f"prototypes.classes[{i}]"
        vec = _need(entry, "vector", where)
        if len(vec) != c:
            raise FormatError(f"{where}.vector: length {len(vec)} != C={c}")
        labels.append(int(_need(entry, "label", where)))
        rows.append(vec)
    vectors = np.asarray(rows, dtype=np.float32).reshape(len(labels), c)
    return vectors, labels, doc.get("source_scene", ""), _need(doc, "model_hash", "prototypes")

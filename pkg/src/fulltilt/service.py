"""JSON-over-HTTP service backing the interactive prompting UI.

Sessions hold a scene reference, accumulated prompts, and the last
detection set. One inference may run per session at a time (409 on a
second). Everything else is stateless over the data directory, so a
restarted service reproduces identical GET responses (session ids aside).
"""

from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from . import formats
from .geometry import Box2D, Particle3D, TomogramDims, project_particle
from .model import checkpoint_hash, load_checkpoint
from .model.network import Detection
from .evaluation import run_inference
from .sim import PromptSet


class SessionCreate(BaseModel):
    scene_id: str


class PromptItem(BaseModel):
    tilt_index: int
    x: float
    y: float
    d: float = Field(gt=0)
    class_label: int = Field(gt=0, alias="class")

    model_config = {"populate_by_name": True}


class PromptBody(BaseModel):
    items: list[PromptItem]


class InferBody(BaseModel):
    use_prototypes: str | None = None


class PrototypeCreate(BaseModel):
    session_id: str


@dataclass
class SceneEntry:
    directory: Path
    stack: object = None
    scene: object = None

    def load(self):
        if self.stack is None:
            self.stack = formats.read_tiltstack(self.directory)
            scene_file = self.directory / "scene.json"
            if scene_file.exists():
                self.scene = formats.read_scene(scene_file)

    @property
    def dims(self) -> TomogramDims:
        self.load()
        if self.scene is not None:
            return self.scene.dims
        n, h, w = self.stack.images.shape
        return TomogramDims(w, h, w)


@dataclass
class Session:
    session_id: str
    scene_id: str
    prompts: list[Box2D] = dc_field(default_factory=list)
    detections: list[Detection] = dc_field(default_factory=list)
    last_output: dict | None = None
    infer_lock: threading.Lock = dc_field(default_factory=threading.Lock)


def percentile_png(image: np.ndarray) -> bytes:
    """8-bit PNG with robust 1st-99th percentile display normalization."""
    from PIL import Image

    lo, hi = np.percentile(image, [1.0, 99.0])
    if hi <= lo:
        scaled = np.zeros_like(image)
    else:
        scaled = np.clip((image - lo) / (hi - lo), 0.0, 1.0)
    img = Image.fromarray((scaled * 255.0).round().astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(ckpt_path: str, data_dir: str) -> FastAPI:
    app = FastAPI(title="fulltilt", version="0.1.0")
    model = load_checkpoint(ckpt_path)
    model_hash = checkpoint_hash(ckpt_path)
    data = Path(data_dir)

    scenes: dict[str, SceneEntry] = {}
    for scene_dir in sorted(data.glob("scene_*")):
        if (scene_dir / "meta.json").exists():
            scenes[scene_dir.name] = SceneEntry(scene_dir)

    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()
    proto_dir = data / "_prototypes"
    proto_dir.mkdir(exist_ok=True)

    def get_scene(scene_id: str) -> SceneEntry:
        if scene_id not in scenes:
            raise HTTPException(404, f"unknown scene {scene_id}")
        entry = scenes[scene_id]
        entry.load()
        return entry

    def get_session(session_id: str) -> Session:
        with sessions_lock:
            if session_id not in sessions:
                raise HTTPException(404, f"unknown session {session_id}")
            return sessions[session_id]

    @app.get("/scenes")
    def list_scenes():
        out = []
        for name, entry in scenes.items():
            entry.load()
            dims = entry.dims
            out.append({
                "id": name,
                "dims": {"w": dims.w, "h": dims.h, "d": dims.d},
                "n_tilts": len(entry.stack.schedule),
                "angles_deg": list(entry.stack.schedule.angles_deg),
            })
        return out

    @app.get("/scenes/{scene_id}/tilts/{index}.png")
    def tilt_png(scene_id: str, index: int):
        entry = get_scene(scene_id)
        if not 0 <= index < len(entry.stack.schedule):
            raise HTTPException(404, f"tilt {index} out of range")
        return Response(content=percentile_png(entry.stack.images[index]),
                        media_type="image/png")

    @app.post("/sessions")
    def create_session(body: SessionCreate):
        get_scene(body.scene_id)
        session = Session(session_id=uuid.uuid4().hex[:12], scene_id=body.scene_id)
        with sessions_lock:
            sessions[session.session_id] = session
        return {"session_id": session.session_id}

    @app.get("/sessions/{session_id}/prompts")
    def get_prompts(session_id: str):
        session = get_session(session_id)
        return {
            "items": [
                {"tilt_index": b.tilt_index, "x": b.x, "y": b.y, "d": b.d, "class": b.class_label}
                for b in session.prompts
            ]
        }

    @app.post("/sessions/{session_id}/prompts")
    def add_prompts(session_id: str, body: PromptBody):
        session = get_session(session_id)
        entry = get_scene(session.scene_id)
        n_tilts = len(entry.stack.schedule)
        for i, item in enumerate(body.items):
            if not 0 <= item.tilt_index < n_tilts:
                raise HTTPException(422, f"items[{i}].tilt_index: {item.tilt_index} outside [0, {n_tilts})")
            session.prompts.append(Box2D(item.tilt_index, item.x, item.y, item.d, item.class_label))
        return {"count": len(session.prompts)}

    @app.delete("/sessions/{session_id}/prompts")
    def clear_prompts(session_id: str):
        session = get_session(session_id)
        session.prompts.clear()
        return {"count": 0}

    @app.post("/sessions/{session_id}/infer")
    def infer(session_id: str, body: InferBody | None = None):
        session = get_session(session_id)
        entry = get_scene(session.scene_id)
        if not session.infer_lock.acquire(blocking=False):
            raise HTTPException(409, "inference already running for this session")
        try:
            body = body or InferBody()
            if body.use_prototypes:
                proto_path = proto_dir / f"{body.use_prototypes}.json"
                if not proto_path.exists():
                    raise HTTPException(404, f"unknown prototypes {body.use_prototypes}")
                vectors, labels, _, proto_hash = formats.read_prototypes(proto_path)
                if proto_hash != model_hash:
                    raise HTTPException(409, "prototype/model hash mismatch")
                dets, runtime, peak, output = run_inference(
                    model, entry.stack, entry.dims,
                    prototypes=(torch.from_numpy(vectors), labels),
                )
            else:
                if not session.prompts:
                    raise HTTPException(422, "session has no prompts")
                prompts = PromptSet(tuple(session.prompts))
                dets, runtime, peak, output = run_inference(
                    model, entry.stack, entry.dims, prompts=prompts)
            session.detections = dets
            session.last_output = {
                "prototypes": output["prototypes"].detach().numpy().tolist(),
                "class_labels": output["class_labels"],
            }
            return formats.detections_doc(dets, runtime, peak, model_hash)
        finally:
            session.infer_lock.release()

    @app.get("/sessions/{session_id}/detections")
    def detections_overlay(session_id: str, tilt: int = 0):
        session = get_session(session_id)
        entry = get_scene(session.scene_id)
        if not 0 <= tilt < len(entry.stack.schedule):
            raise HTTPException(404, f"tilt {tilt} out of range")
        theta = entry.stack.schedule.angles_deg[tilt]
        items = []
        for det in session.detections:
            particle = Particle3D(det.x, det.y, det.z, det.d, det.class_label)
            box = project_particle(particle, theta, entry.dims, tilt)
            items.append({
                "tilt_index": tilt,
                "x": box.x,
                "y": box.y,
                "d": box.d,
                "class": box.class_label,
                "score": det.score,
            })
        return {"items": items, "theta_deg": theta}

    @app.post("/prototypes")
    def save_prototypes(body: PrototypeCreate):
        session = get_session(body.session_id)
        if session.last_output is None:
            raise HTTPException(422, "session has no inference result to distill")
        proto_id = f"proto_{uuid.uuid4().hex[:8]}"
        formats.write_prototypes(
            proto_dir / f"{proto_id}.json",
            np.asarray(session.last_output["prototypes"], dtype=np.float64),
            session.last_output["class_labels"],
            source_scene=session.scene_id,
            model_hash=model_hash,
        )
        return {"proto_id": proto_id}

    @app.get("/prototypes")
    def list_prototypes():
        out = []
        for path in sorted(proto_dir.glob("proto_*.json")):
            vectors, labels, source, _ = formats.read_prototypes(path)
            out.append({
                "proto_id": path.stem,
                "classes": labels,
                "C": int(vectors.shape[1]),
                "source_scene": source,
            })
        return out

    ui_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dist.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dist), html=True), name="ui")

    app.state.sessions = sessions
    app.state.scenes = scenes
    app.state.model_hash = model_hash
    return app

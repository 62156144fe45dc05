"""Portable checkpoint archive: config JSON plus a flat name -> tensor map.

Layout (zip): config.json, manifest.json (ordered [{name, shape}]), and
weights.bin holding every tensor as little-endian float32 in manifest
order. The archive's SHA-256 is the model hash embedded in detections and
prototype files.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile

import numpy as np
import torch

from .config import ModelConfig
from .network import FullTiltNet, build_model


def save_checkpoint(path: str, model: FullTiltNet) -> None:
    manifest = []
    blob = io.BytesIO()
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        manifest.append({"name": name, "shape": list(arr.shape)})
        blob.write(arr.astype("<f4").tobytes())
    tmp = path + ".tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        # fixed timestamps keep the archive (and so the model hash) a pure
        # function of the weights
        for name, data in [
            ("config.json", model.cfg.to_json()),
            ("manifest.json", json.dumps(manifest)),
            ("weights.bin", blob.getvalue()),
        ]:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, data)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> FullTiltNet:
    with zipfile.ZipFile(path) as zf:
        cfg = ModelConfig.from_json(zf.read("config.json").decode())
        manifest = json.loads(zf.read("manifest.json").decode())
        raw = zf.read("weights.bin")
    state = {}
    offset = 0
    for entry in manifest:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.copy())
        offset += count * 4
    model = build_model(cfg)
    model.load_state_dict(state)
    model.eval()
    return model


def checkpoint_hash(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

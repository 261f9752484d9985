"""JSON checkpoints: domain, training options, all subnetworks, Adam state."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .domains import domain_from_dict
from .fieldtnn import FieldTNN
from .subnet import Subnetwork

FORMAT = "tnnmaxwell-checkpoint/1"


def _field_to_dict(f: FieldTNN) -> dict:
    if not all(isinstance(s, Subnetwork) for row in f.factors for s in row):
        raise TypeError("only subnetwork-backed fields can be checkpointed")
    return {
        "box": [list(iv) for iv in f.box],
        "envelopes": f.envelopes,
        "factors": [[s.to_dict() for s in row] for row in f.factors],
    }


def _field_from_dict(d: dict) -> FieldTNN:
    return FieldTNN([[Subnetwork.from_dict(s) for s in row] for row in d["factors"]],
                    tuple(tuple(iv) for iv in d["box"]), d["envelopes"])


def save_checkpoint(path, model, adam=None, step: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "format": FORMAT,
        "step": int(step),
        "domain": model.domain.to_dict(),
        "config": model.config.to_dict(),
        "fields": [_field_to_dict(f) for f in model.fields],
        "adam": None if adam is None else {
            "t": adam.t,
            "m": [a.tolist() for a in adam.m],
            "v": [a.tolist() for a in adam.v],
        },
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data))
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    """Return (model, adam_state or None, step)."""
    from .training import AdamState, TrainConfig, build_model

    data = json.loads(Path(path).read_text())
    if data.get("format") != FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    domain = domain_from_dict(data["domain"])
    config = TrainConfig.from_dict(data["config"])
    fields = [_field_from_dict(f) for f in data["fields"]]
    model = build_model(domain, config, fields)
    adam = None
    if data.get("adam"):
        params = model.parameters()
        a = data["adam"]
        adam = AdamState([np.asarray(m, dtype=float).reshape(p.shape) for m, p in zip(a["m"], params)],
                         [np.asarray(v, dtype=float).reshape(p.shape) for v, p in zip(a["v"], params)],
                         int(a["t"]))
    return model, adam, int(data["step"])

"""Model weights on disk: JSON header + raw little-endian float32 payload.

Same two-file convention as MVOL: ``fold0.uwts`` holds the header (spec,
seed, epochs, named parameter shapes in serialization order) and
``fold0.uwts.raw`` the concatenated arrays in that order.
"""

import json
import os

import numpy as np

from ..mvol import _atomic_write, payload_path
from ..planner import PipelinePlan
from .train import UNetModel
from .unet import UNetSpec


class WeightsError(ValueError):
    pass


def save_model(path, model: UNetModel) -> None:
    names = list(model.state.keys())
    header = {
        "format": "extremeseg-weights",
        "version": 1,
        "spec": model.spec.to_dict(),
        "seed": model.seed,
        "epochs": model.epochs,
        "params": [{"name": n, "shape": list(model.state[n].shape)}
                   for n in names],
    }
    payload = b"".join(
        np.ascontiguousarray(model.state[n], dtype="<f4").tobytes()
        for n in names)
    _atomic_write(payload_path(path), payload)
    _atomic_write(str(path), (json.dumps(header, indent=1) + "\n").encode())


def load_model(path) -> UNetModel:
    try:
        with open(path, "rb") as f:
            header = json.loads(f.read().decode())
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise WeightsError(f"malformed weights header {path}: {e}") from e
    if header.get("format") != "extremeseg-weights":
        raise WeightsError(f"{path} is not a weights header")
    spec = UNetSpec.from_dict(header["spec"])
    with open(payload_path(path), "rb") as f:
        raw = f.read()
    state = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        nbytes = count * 4
        if offset + nbytes > len(raw):
            raise WeightsError(f"weights payload truncated at {entry['name']}")
        state[entry["name"]] = np.frombuffer(
            raw, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise WeightsError("weights payload has trailing bytes")
    return UNetModel(spec=spec, state=state, seed=int(header["seed"]),
                     epochs=int(header["epochs"]))


def save_ensemble(dirpath, models, plan: PipelinePlan) -> None:
    os.makedirs(dirpath, exist_ok=True)
    _atomic_write(os.path.join(dirpath, "plan.json"),
                  plan.to_json().encode() + b"\n")
    for i, m in enumerate(models):
        save_model(os.path.join(dirpath, f"fold{i}.uwts"), m)


def load_ensemble(dirpath):
    plan_path = os.path.join(dirpath, "plan.json")
    with open(plan_path) as f:
        plan = PipelinePlan.from_json(f.read())
    models = []
    i = 0
    while True:
        path = os.path.join(dirpath, f"fold{i}.uwts")
        if not os.path.exists(path):
            break
        models.append(load_model(path))
        i += 1
    if not models:
        raise WeightsError(f"no fold weights found in {dirpath}")
    return models, plan

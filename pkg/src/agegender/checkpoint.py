"""Binary checkpoint container.

Layout::

    b"AGCKPT\\0\\0"            8-byte magic
    uint32 LE                 format version
    uint64 LE                 header length N
    N bytes                   UTF-8 JSON header
    payload                   little-endian float64 arrays, back to back

The header holds the model config, the head list, per-array name / shape /
offset / trainable flag, and a training-state block (step, epoch, dev
score) whose ADAM moment arrays live in the payload under ``adam.m.<name>``
and ``adam.v.<name>``.
"""

import json
import struct

import numpy as np

from . import tensor as T
from .config_types import ModelConfig
from .model import Model
from .optim import TrainState

MAGIC = b"AGCKPT\x00\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _state_block(state):
    if state is None:
        return None
    return {"step": state.step, "epoch": state.epoch, "best_epoch": state.best_epoch,
            "best_dev_score": state.best_dev_score, "rejected_steps": state.rejected_steps}


def save_checkpoint(path, model, state=None, extra=None):
    if state is None:
        state = model.meta.get("train_state")
    arrays = [(name, p.data, bool(model.trainable[name])) for name, p in model.params.items()]
    if state is not None:
        arrays += [(f"adam.m.{n}", a, False) for n, a in sorted(state.m.items())]
        arrays += [(f"adam.v.{n}", a, False) for n, a in sorted(state.v.items())]
    index, offset = [], 0
    for name, data, trainable in arrays:
        index.append({"name": name, "shape": list(data.shape), "offset": offset, "trainable": trainable})
        offset += data.size * 8
    header = {
        "format": "agegender-checkpoint",
        "config": model.config.to_dict(),
        "heads": list(model.heads),
        "arrays": index,
        "train_state": _state_block(state),
        "meta": {k: v for k, v in model.meta.items() if isinstance(v, (int, float, str, bool))},
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for _, data, _ in arrays:
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(model, train_state or None, extra)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, n = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[20:20 + n].decode("utf-8"))
    payload = memoryview(raw)[20 + n:]
    arrays = {}
    trainable = {}
    for entry in header["arrays"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + size * 8 > len(payload):
            raise CheckpointError(f"{path}: truncated payload at {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(payload[start:start + size * 8], dtype="<f8").reshape(entry["shape"]).astype(np.float64)
        trainable[entry["name"]] = entry["trainable"]
    config = ModelConfig.from_dict(header["config"])
    params = {}
    mask = {}
    for name, data in arrays.items():
        if name.startswith("adam."):
            continue
        params[name] = T.Tensor(data, requires_grad=trainable[name])
        mask[name] = trainable[name]
    model = Model(config, params, mask, tuple(header["heads"]), dict(header.get("meta", {})))
    state = None
    block = header.get("train_state")
    if block is not None:
        state = TrainState(step=block["step"], epoch=block["epoch"], best_epoch=block["best_epoch"],
                           best_dev_score=block["best_dev_score"], rejected_steps=block["rejected_steps"])
        for name, data in arrays.items():
            if name.startswith("adam.m."):
                state.m[name[len("adam.m."):]] = data
            elif name.startswith("adam.v."):
                state.v[name[len("adam.v."):]] = data
        model.meta["train_state"] = state
    return model, state, header.get("extra", {})

"""Binary checkpoint container for a :class:`~mimvc.training.ModelState`.

Layout::

    MIMVC-STATE <version>\\n
    <one-line JSON header>\\n
    <little-endian float64 payload>

The header records the model shape, training config, epoch and, for every
tensor, its name, shape and offset (in elements) into the payload. Adam
moments are stored as ``adam.<param>.exp_avg`` / ``adam.<param>.exp_avg_sq``.
"""

from __future__ import annotations

import json

import numpy as np
import torch

from .exceptions import DataError
from .training import ModelState, TrainConfig, build_state

MAGIC = b"MIMVC-STATE"
VERSION = 1


def _named_tensors(state: ModelState):
    tensors = {}
    step = 0
    for name, p in state.model.named_parameters():
        tensors[name] = p.detach()
        st = state.optimizer.state.get(p)
        if st:
            tensors[f"adam.{name}.exp_avg"] = st["exp_avg"]
            tensors[f"adam.{name}.exp_avg_sq"] = st["exp_avg_sq"]
            step = int(st["step"])
    return tensors, step


def save_state(state: ModelState, path, extra=None):
    """Write ``state`` (plus optional named arrays in ``extra``) to ``path``."""
    tensors, step = _named_tensors(state)
    for name, arr in (extra or {}).items():
        tensors[f"extra.{name}"] = torch.as_tensor(np.asarray(arr, dtype=np.float64))
    entries, chunks, offset = [], [], 0
    for name, t in tensors.items():
        a = np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    m = state.model
    header = {
        "version": VERSION,
        "epoch": state.epoch,
        "seed": state.config.seed,
        "adam_step": step,
        "model": {"dims": m.dims, "n_clusters": m.n_clusters,
                  "hidden_dims": m.hidden_dims, "use_bias": m.use_bias},
        "config": state.config.to_dict(),
        "tensors": entries,
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC + b" " + str(VERSION).encode() + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for c in chunks:
            fh.write(c)


def read_container(path):
    """Return ``(header, {name: ndarray})``."""
    with open(path, "rb") as fh:
        first = fh.readline()
        if not first.startswith(MAGIC):
            raise DataError(f"{path} is not a model state file")
        version = int(first.split()[1])
        if version != VERSION:
            raise DataError(f"unsupported state version {version}")
        header = json.loads(fh.readline())
        payload = np.frombuffer(fh.read(), dtype="<f8")
    arrays = {}
    for e in header["tensors"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        chunk = payload[e["offset"]:e["offset"] + size]
        if chunk.size != size:
            raise DataError(f"truncated state file: tensor {e['name']!r}")
        arrays[e["name"]] = chunk.reshape(e["shape"]).copy()
    return header, arrays


def load_state(path):
    """Rebuild the model and optimiser. Returns ``(ModelState, extras)``."""
    header, arrays = read_container(path)
    config = TrainConfig.from_dict(header["config"])
    m = header["model"]
    state = build_state(m["dims"], m["n_clusters"], config)
    state.epoch = header["epoch"]
    with torch.no_grad():
        for name, p in state.model.named_parameters():
            if name not in arrays:
                raise DataError(f"state file lacks parameter {name!r}")
            p.copy_(torch.from_numpy(arrays[name]))
            if f"adam.{name}.exp_avg" in arrays:
                state.optimizer.state[p] = {
                    "step": torch.tensor(float(header["adam_step"])),
                    "exp_avg": torch.from_numpy(arrays[f"adam.{name}.exp_avg"]),
                    "exp_avg_sq": torch.from_numpy(arrays[f"adam.{name}.exp_avg_sq"]),
                }
    extras = {k[len("extra."):]: v for k, v in arrays.items() if k.startswith("extra.")}
    return state, extras

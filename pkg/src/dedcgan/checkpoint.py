"""Model checkpoints: a JSON manifest plus one DGT1 file per named tensor.

Tensor names carry the model prefix, e.g. ``disc.conv1.offset.weight`` or
``gen.up2.bias``.  Loading rebuilds every model from its architecture
descriptor and refuses weights that do not fit it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .exceptions import CheckpointMismatch, FormatError
from .models import build
from .nn.modules import Module

FORMAT = "dedcgan-checkpoint"


@dataclass
class Checkpoint:
    models: dict[str, Module]
    config: dict = field(default_factory=dict)
    epoch: int = 0
    rng_state: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def __getitem__(self, name: str) -> Module:
        return self.models[name]


def save_checkpoint(path, models: dict[str, Module], config: dict | None = None, epoch: int = 0,
                    rng_state: dict | None = None, history: list | None = None) -> Path:
    root = Path(path)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    entries = []
    for prefix, model in models.items():
        for name, arr in model.state_dict().items():
            full = f"{prefix}.{name}"
            rel = f"tensors/{full}.dgt"
            container.save_tensor(root / rel, arr)
            entries.append({"name": full, "file": rel, "shape": list(arr.shape), "dtype": str(arr.dtype)})
    container.write_manifest(root / "manifest.json", {
        "format": FORMAT,
        "version": 1,
        "models": {p: m.descriptor for p, m in models.items()},
        "config": config or {},
        "epoch": int(epoch),
        "rng_state": rng_state or {},
        "history": history or [],
        "tensors": entries,
    })
    return root


def load_checkpoint(path) -> Checkpoint:
    root = Path(path)
    man = container.read_manifest(root / "manifest.json")
    if man.get("format") != FORMAT:
        raise FormatError(f"{root} is not a checkpoint (format={man.get('format')!r})")
    states: dict[str, dict] = {p: {} for p in man["models"]}
    for e in man["tensors"]:
        prefix, _, name = e["name"].partition(".")
        if prefix not in states:
            raise CheckpointMismatch(f"tensor {e['name']} belongs to no declared model")
        arr = container.load_tensor(root / e["file"])
        if list(arr.shape) != e["shape"]:
            raise CheckpointMismatch(f"{e['name']}: file shape {arr.shape} != manifest {e['shape']}")
        states[prefix][name] = arr
    models = {}
    for prefix, desc in man["models"].items():
        m = build(desc)
        m.load_state_dict(states[prefix])
        m.eval()
        models[prefix] = m
    return Checkpoint(models, man.get("config", {}), man.get("epoch", 0), man.get("rng_state", {}),
                      man.get("history", []))


def state_equal(a: Module, b: Module) -> bool:
    """Bit-exact equality of two models' parameters and buffers."""
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(
        sa[k].dtype == sb[k].dtype and np.array_equal(sa[k].view(np.uint8), sb[k].view(np.uint8)) for k in sa)

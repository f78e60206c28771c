"""Checkpoints: one safetensors archive of named float32 arrays plus JSON metadata.

Metadata is stored as a single UTF-8 JSON string under the ``s2r`` header key,
serialized with sorted keys so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from safetensors.torch import load as st_load
from safetensors.torch import save as st_save

META_KEY = "s2r"
OPTIM_PREFIX = "optim."


@dataclass
class Checkpoint:
    tensors: dict[str, torch.Tensor]
    metadata: dict = field(default_factory=dict)

    @property
    def stage(self):
        return self.metadata.get("stage")

    @property
    def frozen(self) -> list[str]:
        return list(self.metadata.get("frozen", []))

    def parameters(self) -> dict[str, torch.Tensor]:
        return {k: v for k, v in self.tensors.items() if not k.startswith(OPTIM_PREFIX)}

    def optimizer_state(self) -> dict[str, torch.Tensor]:
        return {k: v for k, v in self.tensors.items() if k.startswith(OPTIM_PREFIX)}

    def names_under(self, prefix: str) -> list[str]:
        return sorted(k for k in self.parameters() if k.startswith(prefix + "."))

    def to_bytes(self) -> bytes:
        tensors = {k: v.detach().to("cpu", torch.float32).contiguous() for k, v in self.tensors.items()}
        meta = {META_KEY: json.dumps(self.metadata, sort_keys=True, ensure_ascii=False)}
        return st_save(tensors, metadata=meta)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        (header_len,) = struct.unpack("<Q", data[:8])
        header = json.loads(data[8:8 + header_len].decode("utf-8"))
        meta = json.loads(header.get("__metadata__", {}).get(META_KEY, "{}"))
        return cls(dict(st_load(data)), meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def hash_tensors(tensors: dict[str, torch.Tensor], prefixes=None) -> str:
    """SHA-256 over the raw bytes of every tensor whose name falls under ``prefixes``."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        if prefixes is not None and not any(name == p or name.startswith(p + ".") for p in prefixes):
            continue
        arr = tensors[name].detach().cpu().contiguous().numpy()
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def module_hash(module: torch.nn.Module, prefixes=None) -> str:
    return hash_tensors(dict(module.state_dict()), prefixes)

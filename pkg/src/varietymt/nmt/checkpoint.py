"""Binary checkpoint format: magic, version, JSON header, raw little-endian float64 tensors."""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import FormatError
from .model import DTYPE, Specials, TransformerConfig, TranslationModel

MAGIC = b"VMTCKPT\x00"
VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    step: int
    path: Path

    def load(self) -> TranslationModel:
        return load_checkpoint(self.path)[0]


def _header(model: TranslationModel, step: int) -> tuple[bytes, list[tuple[str, torch.Tensor]]]:
    tensors = [(name, p.detach()) for name, p in model.named_parameters()]
    meta = {
        "config": model.config.to_dict(),
        "specials": model.specials.to_dict(),
        "subword_digest": model.subword_digest,
        "step": step,
        "tensors": [[name, list(t.shape)] for name, t in tensors],
    }
    return json.dumps(meta, sort_keys=True).encode("utf-8"), tensors


def checkpoint_bytes(model: TranslationModel, step: int = 0) -> bytes:
    header, tensors = _header(model, step)
    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header]
    for _, t in tensors:
        parts.append(t.to(DTYPE).contiguous().numpy().astype("<f8", copy=False).tobytes())
    return b"".join(parts)


def save_checkpoint(model: TranslationModel, path, step: int = 0) -> Path:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(checkpoint_bytes(model, step))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[TranslationModel, int]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(data[16:16 + hlen])
    specials = meta["specials"]
    model = TranslationModel(TransformerConfig(**meta["config"]),
                             Specials(specials["pad"], specials["bos"], specials["eos"],
                                      specials["unk"], dict(specials["varieties"])),
                             meta["subword_digest"])
    params = dict(model.named_parameters())
    offset = 16 + hlen
    with torch.no_grad():
        for name, shape in meta["tensors"]:
            n = int(np.prod(shape)) if shape else 1
            end = offset + 8 * n
            if end > len(data) or name not in params:
                raise FormatError(f"{path}: truncated or mismatched tensor {name}")
            arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(shape)
            params[name].copy_(torch.from_numpy(arr.astype(np.float64)))
            offset = end
    if offset != len(data):
        raise FormatError(f"{path}: trailing bytes after last tensor")
    model.eval()
    return model, int(meta["step"])

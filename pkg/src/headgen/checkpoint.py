"""``ut-ckpt-v1`` container for model weights.

Layout::

    ut-ckpt-v1
    model = ut
    d_model = 512
    ...
    <blank line>
    tensor <name> <d0>,<d1>,...
    <raw little-endian float64 bytes>
    ...
    end
"""
from __future__ import annotations

import numpy as np

from .baselines import RnnConfig, RnnSeq2Seq
from .model_ut import UniversalTransformer, UtConfig
from .tensor import Tensor

HEADER = b"ut-ckpt-v1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model, extra: dict | None = None) -> None:
    """Write config, optional extra key-values and every named parameter."""
    lines = [HEADER.decode(), f"model = {model.kind}"]
    for k, v in model.config.to_dict().items():
        lines.append(f"{k} = {v}")
    for k, v in (extra or {}).items():
        lines.append(f"extra.{k} = {v}")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n\n").encode("utf-8"))
        for name, t in model.parameters().items():
            shape = ",".join(str(s) for s in t.shape)
            f.write(f"tensor {name} {shape}\n".encode("utf-8"))
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        f.write(b"end\n")


def read_checkpoint(path) -> tuple[str, dict[str, str], dict[str, str], dict[str, np.ndarray]]:
    """``(kind, config, extra, tensors)`` exactly as stored."""
    with open(path, "rb") as f:
        if f.readline().rstrip(b"\n") != HEADER:
            raise CheckpointError(f"{path}: not a {HEADER.decode()} checkpoint")
        kv: dict[str, str] = {}
        while True:
            line = f.readline()
            if not line:
                raise CheckpointError(f"{path}: truncated header")
            line = line.decode("utf-8").rstrip("\n")
            if not line:
                break
            key, _, value = line.partition(" = ")
            kv[key] = value
        tensors: dict[str, np.ndarray] = {}
        while True:
            line = f.readline().decode("utf-8").rstrip("\n")
            if line == "end":
                break
            parts = line.split(" ")
            if len(parts) != 3 or parts[0] != "tensor":
                raise CheckpointError(f"{path}: bad tensor record {line!r}")
            shape = tuple(int(s) for s in parts[2].split(",") if s)
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"{path}: truncated data for {parts[1]}")
            tensors[parts[1]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    kind = kv.pop("model", None)
    if kind is None:
        raise CheckpointError(f"{path}: missing model tag")
    extra = {k[len("extra."):]: v for k, v in kv.items() if k.startswith("extra.")}
    config = {k: v for k, v in kv.items() if not k.startswith("extra.")}
    return kind, config, extra, tensors


def load_checkpoint(path):
    """Rebuild the stored model; returns ``(model, extra)``."""
    kind, config, extra, tensors = read_checkpoint(path)
    params = {k: Tensor(v, requires_grad=True) for k, v in tensors.items()}
    if kind == "ut":
        model = UniversalTransformer(UtConfig.from_dict(config), params)
    elif kind == "rnn":
        model = RnnSeq2Seq(RnnConfig.from_dict(config), params)
    else:
        raise CheckpointError(f"{path}: unknown model tag {kind!r}")
    return model, extra

"""Model checkpoints: magic "ASEM", a JSON-encoded config, then per-layer
float32 arrays in declaration order.

Weights are stored as 32-bit floats, so a first save/load round trip
quantizes them; every round trip after that is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import AseConfig
from .net import AseModel, parameter_shapes

_MODEL_MAGIC = b"ASEM"
_MODEL_VERSION = 1


def model_to_bytes(model: AseModel) -> bytes:
    cfg = model.config
    header = {
        "alpha": cfg.alpha,
        "in_len": cfg.in_len,
        "channels": cfg.channels,
        "encoder_dense_widths": list(cfg.encoder_dense_widths),
        "out_len": cfg.out_len,
        "l2_weight": cfg.l2_weight,
        "dropout_p": cfg.dropout_p,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<4sBI", _MODEL_MAGIC, _MODEL_VERSION, len(blob)), blob]
    for name in parameter_shapes(cfg):
        parts.append(model.params[name].astype("<f4").tobytes())
    return b"".join(parts)


def model_from_bytes(blob: bytes) -> AseModel:
    head_size = struct.calcsize("<4sBI")
    if len(blob) < head_size:
        raise ValueError("model checkpoint truncated")
    magic, version, json_len = struct.unpack("<4sBI", blob[:head_size])
    if magic != _MODEL_MAGIC:
        raise ValueError(f"bad model magic {magic!r}")
    if version != _MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    try:
        header = json.loads(blob[head_size : head_size + json_len].decode("utf-8"))
        config = AseConfig(
            alpha=header["alpha"],
            in_len=header["in_len"],
            channels=header["channels"],
            encoder_dense_widths=tuple(header["encoder_dense_widths"]),
            out_len=header["out_len"],
            l2_weight=header["l2_weight"],
            dropout_p=header["dropout_p"],
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ValueError(f"bad model header: {exc}") from None

    offset = head_size + json_len
    params = {}
    for name, shape in parameter_shapes(config).items():
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(blob):
            raise ValueError(f"model checkpoint truncated in layer {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params[name] = arr.astype(np.float64).reshape(shape)
        offset = end
    if offset != len(blob):
        raise ValueError(f"{len(blob) - offset} trailing bytes after the last layer")
    return AseModel(config=config, params=params)


def save_model(model: AseModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> AseModel:
    return model_from_bytes(Path(path).read_bytes())

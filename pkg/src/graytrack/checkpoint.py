"""Versioned model checkpoints: named tensors plus config echo and seed."""

from __future__ import annotations

import io
from pathlib import Path

import torch

from .errors import SchemaError

FORMAT = "graytrack-checkpoint"
VERSION = 1


def save_checkpoint(path, kind: str, model: torch.nn.Module, config: dict, seed: int,
                    extra: dict | None = None) -> None:
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "config": dict(config),
        "seed": int(seed),
        "extra": dict(extra or {}),
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, kind: str | None = None) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise SchemaError(f"{path} is not a {FORMAT} file")
    if payload.get("version") != VERSION:
        raise SchemaError(f"unsupported checkpoint version {payload.get('version')}")
    if kind is not None and payload.get("kind") != kind:
        raise SchemaError(f"expected a {kind} checkpoint, found {payload.get('kind')}")
    return payload

"""Versioned single-file checkpoints."""

from __future__ import annotations

from pathlib import Path

import torch

from .dims import ModelDims
from .vae import PianoTreeVAE

MAGIC = "PIANOTREE-CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, model: PianoTreeVAE, config: dict | None = None, **extra) -> None:
    """Write parameters (keyed by module path), dims, the training config and ``extra``."""
    payload = {
        "magic": MAGIC,
        "version": VERSION,
        "dims": model.dims.to_dict(),
        "config": config or {},
        "state_dict": model.state_dict(),
        **extra,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def read_checkpoint(path: str | Path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != MAGIC:
        raise CheckpointError(f"{path} is not a PianoTree checkpoint")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    return payload


def load_checkpoint(path: str | Path, device: str | torch.device = "cpu") -> tuple[PianoTreeVAE, dict]:
    payload = read_checkpoint(path)
    model = PianoTreeVAE(ModelDims.from_dict(payload["dims"]))
    model.load_state_dict(payload["state_dict"])
    return model.to(device), payload

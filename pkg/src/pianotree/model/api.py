"""Segment-level entry points around :class:`PianoTreeVAE`."""

from __future__ import annotations

from typing import Sequence

import torch

from ..codec.segment import PolySegment, SegmentError, encode_duration, validate
from .batch import NUM_PITCHES, EOS, SOS, collate
from .vae import DecodeOutput, LatentPosterior, PianoTreeVAE

_TOKENS = {"SOS": SOS, "EOS": EOS}


def embed_note(model: PianoTreeVAE, pitch: int | str, duration: int | None = None) -> torch.Tensor:
    """Encoder note embedding of one (pitch, duration) pair.

    ``pitch`` may be ``"SOS"``/``"EOS"``, whose duration digits are all zero.
    """
    if isinstance(pitch, str):
        if pitch not in _TOKENS:
            raise KeyError(f"unknown token {pitch!r}")
        token, bits = _TOKENS[pitch], (0,) * 5
    else:
        if not 0 <= pitch < NUM_PITCHES:
            raise KeyError(f"pitch {pitch} not in vocabulary")
        token, bits = pitch, encode_duration(duration)
    w = model.note_embedding.linear.weight
    return model.note_embedding(
        torch.tensor([token], device=w.device), torch.tensor([bits], dtype=w.dtype, device=w.device)
    )[0]


def _as_batch(model: PianoTreeVAE, segments: Sequence[PolySegment]):
    for seg in segments:
        violations = validate(seg)
        if violations:
            raise SegmentError(violations)
        if seg.num_steps != model.dims.num_steps:
            raise ValueError(f"segment has {seg.num_steps} steps, model expects {model.dims.num_steps}")
    w = model.fc_mu.weight
    return collate(segments, model.dims.max_simu_notes).to(w.device, w.dtype)


def encode(model: PianoTreeVAE, segments: PolySegment | Sequence[PolySegment]) -> LatentPosterior:
    if isinstance(segments, PolySegment):
        segments = [segments]
    post, _ = model.encode_batch(_as_batch(model, segments))
    return post


def decode(
    model: PianoTreeVAE,
    z: torch.Tensor,
    teacher: Sequence[PolySegment] | None = None,
    tf_rate: float = 0.0,
    generator: torch.Generator | None = None,
) -> tuple[list[PolySegment], DecodeOutput]:
    if z.dim() == 1:
        z = z[None]
    batch = _as_batch(model, teacher) if teacher is not None else None
    out = model.decode(z, teacher=batch, tf_rate=tf_rate, generator=generator)
    return out.segments(model.dims.num_steps), out


@torch.no_grad()
def generate(model: PianoTreeVAE, z: torch.Tensor, batch_size: int = 256) -> list[PolySegment]:
    """Free-running decode of each row of ``z``."""
    was_training = model.training
    model.eval()
    out: list[PolySegment] = []
    try:
        for i in range(0, z.shape[0], batch_size):
            out.extend(model.decode(z[i : i + batch_size]).segments(model.dims.num_steps))
    finally:
        model.train(was_training)
    return out

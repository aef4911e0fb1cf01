"""Padding of variable-size note trees into dense tensors."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import torch

from ..codec.segment import DURATION_BITS, PolySegment, encode_duration

log = logging.getLogger(__name__)

NUM_PITCHES = 128
EOS = 128
SOS = 129
PITCH_INPUTS = 130  # one-hot width of the note embedding's pitch part
PITCH_CLASSES = 129  # decoder softmax: 128 pitches + EOS
IGNORE = -100


@dataclass
class TreeBatch:
    """Dense view of ``B`` segments with at most ``K`` notes per onset.

    ``pitch``/``bits`` hold the real notes (padding beyond ``counts``);
    ``pitch_target`` additionally has EOS at position ``counts`` and
    ``IGNORE`` after it.
    """

    pitch: torch.Tensor  # (B, T, K) long
    bits: torch.Tensor  # (B, T, K, 5) float
    counts: torch.Tensor  # (B, T) long
    num_steps: int

    @property
    def batch_size(self) -> int:
        return self.pitch.shape[0]

    @property
    def max_notes(self) -> int:
        return self.pitch.shape[2]

    def to(self, device=None, dtype=None) -> "TreeBatch":
        return TreeBatch(
            self.pitch.to(device),
            self.bits.to(device=device, dtype=dtype),
            self.counts.to(device),
            self.num_steps,
        )

    def pitch_target(self) -> torch.Tensor:
        B, T, K = self.pitch.shape
        tgt = torch.full((B, T, K + 1), IGNORE, dtype=torch.long, device=self.pitch.device)
        k = torch.arange(K + 1, device=self.pitch.device)
        real = k[:K] < self.counts[..., None]
        tgt[..., :K][real] = self.pitch[real]
        eos = k == self.counts[..., None]
        tgt[eos] = EOS
        return tgt

    def dur_target(self) -> torch.Tensor:
        B, T, K = self.pitch.shape
        tgt = torch.full((B, T, K + 1, DURATION_BITS), IGNORE, dtype=torch.long, device=self.pitch.device)
        real = torch.arange(K, device=self.pitch.device) < self.counts[..., None]
        tgt[..., :K, :][real] = self.bits[real].long()
        return tgt

    def encoder_sequences(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Per-onset ``[SOS, notes..., EOS]`` token/bit sequences and lengths.

        Returns tensors shaped ``(B, T, K + 2)``, ``(B, T, K + 2, 5)`` and ``(B, T)``.
        """
        B, T, K = self.pitch.shape
        dev = self.pitch.device
        tok = torch.full((B, T, K + 2), EOS, dtype=torch.long, device=dev)
        tok[..., 0] = SOS
        k = torch.arange(K, device=dev)
        real = k < self.counts[..., None]
        tok[..., 1 : K + 1] = torch.where(real, self.pitch, torch.full_like(self.pitch, EOS))
        bits = torch.zeros((B, T, K + 2, DURATION_BITS), dtype=self.bits.dtype, device=dev)
        bits[..., 1 : K + 1, :] = self.bits * real[..., None]
        return tok, bits, self.counts + 2


def collate(segments: Sequence[PolySegment], max_simu_notes: int = 16) -> TreeBatch:
    if not segments:
        raise ValueError("cannot collate an empty batch")
    T = segments[0].num_steps
    if any(s.num_steps != T for s in segments):
        raise ValueError("all segments in a batch must share num_steps")
    K = max(1, max(min(len(row), max_simu_notes) for s in segments for row in s.onsets))
    B = len(segments)
    pitch = torch.zeros((B, T, K), dtype=torch.long)
    bits = torch.zeros((B, T, K, DURATION_BITS))
    counts = torch.zeros((B, T), dtype=torch.long)
    for b, seg in enumerate(segments):
        for t, row in enumerate(seg.onsets):
            if len(row) > max_simu_notes:
                log.warning("onset %d holds %d notes; truncating to %d", t, len(row), max_simu_notes)
                row = row[:max_simu_notes]
            counts[b, t] = len(row)
            for k, note in enumerate(row):
                pitch[b, t, k] = note.pitch
                bits[b, t, k] = torch.tensor(encode_duration(note.duration), dtype=bits.dtype)
    return TreeBatch(pitch, bits, counts, T)

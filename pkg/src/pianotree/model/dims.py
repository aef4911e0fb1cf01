from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class ModelDims:
    """Layer sizes. Summaries come from bidirectional GRUs, so each summary is
    twice the matching encoder hidden size, and the decoder GRU at that level
    uses the summary size as its hidden size."""

    note_dim: int = 128
    simu_note_dim: int = 512
    score_dim: int = 1024
    z_dim: int = 512
    enc_pitch_hidden: int = 256
    enc_time_hidden: int = 512
    dec_pitch_hidden: int = 512
    dec_time_hidden: int = 1024
    dec_dur_hidden: int = 64
    max_simu_notes: int = 16
    num_steps: int = 32

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")
        if not self.simu_note_dim == 2 * self.enc_pitch_hidden == self.dec_pitch_hidden:
            raise ValueError("need simu_note_dim == 2 * enc_pitch_hidden == dec_pitch_hidden")
        if not self.score_dim == 2 * self.enc_time_hidden == self.dec_time_hidden:
            raise ValueError("need score_dim == 2 * enc_time_hidden == dec_time_hidden")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown model dimension(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def miniature(cls) -> "ModelDims":
        return cls(
            note_dim=4,
            simu_note_dim=8,
            score_dim=8,
            z_dim=4,
            enc_pitch_hidden=4,
            enc_time_hidden=4,
            dec_pitch_hidden=8,
            dec_time_hidden=8,
            dec_dur_hidden=4,
            max_simu_notes=4,
            num_steps=4,
        )

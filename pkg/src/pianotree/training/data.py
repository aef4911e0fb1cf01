"""Corpus index, song-level splitting and key augmentation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..codec.segment import transpose
from ..codec.shards import SegmentRecord

AUGMENT_SHIFTS = tuple(range(-6, 6))


@dataclass
class SongEntry:
    song_id: str
    path: str
    meter: list[int]
    segment_ids: list[str]
    split: str | None = None


@dataclass
class CorpusIndex:
    songs: list[SongEntry] = field(default_factory=list)
    shards: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"songs": [asdict(s) for s in self.songs], "shards": self.shards}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CorpusIndex":
        obj = json.loads(text)
        return cls([SongEntry(**s) for s in obj["songs"]], obj.get("shards", []))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusIndex":
        return cls.from_json(Path(path).read_text())

    def songs_in(self, split: str) -> set[str]:
        return {s.song_id for s in self.songs if s.split == split}


def split_dataset(song_ids: Sequence[str], ratio: float = 0.9, seed: int = 0) -> tuple[list[str], list[str]]:
    """Random song-level partition into (train, test); both sides are non-empty."""
    ids = sorted(set(song_ids))
    if not ids:
        raise ValueError("cannot split an empty corpus")
    if len(ids) < 2:
        raise ValueError("need at least 2 songs to split")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = min(max(int(round(ratio * len(ids))), 1), len(ids) - 1)
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return train, test


def augment(records: Iterable[SegmentRecord], shifts: Sequence[int] = AUGMENT_SHIFTS) -> list[SegmentRecord]:
    """One transposed copy per shift; copies keep the source song id."""
    out = []
    for rec in records:
        for k in shifts:
            seg = rec.segment if k == 0 else transpose(rec.segment, k)
            out.append(SegmentRecord(f"{rec.segment_id}@{k:+d}", rec.song_id, seg))
    return out

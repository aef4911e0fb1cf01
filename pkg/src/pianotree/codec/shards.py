"""Line-delimited JSON dataset shards, one segment per line.

Each record is::

    {"segment_id": "song-0003/0001", "song_id": "song-0003",
     "num_steps": 32, "onsets": [[[60, 4], [64, 4]], [], ...]}

``onsets[t]`` lists the ``[pitch, duration]`` pairs starting at step t,
ascending by pitch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .segment import PolySegment


@dataclass(frozen=True)
class SegmentRecord:
    segment_id: str
    song_id: str
    segment: PolySegment

    def to_json(self) -> str:
        return json.dumps(
            {
                "segment_id": self.segment_id,
                "song_id": self.song_id,
                "num_steps": self.segment.num_steps,
                "onsets": self.segment.to_lists(),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "SegmentRecord":
        obj = json.loads(line)
        seg = PolySegment.from_lists(obj["onsets"], obj["num_steps"]).checked()
        return cls(obj["segment_id"], obj["song_id"], seg)


def write_shard(path: str | Path, records: Iterable[SegmentRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
            n += 1
    return n


def read_shard(path: str | Path) -> Iterator[SegmentRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield SegmentRecord.from_json(line)


def read_shards(paths: Iterable[str | Path]) -> list[SegmentRecord]:
    out: list[SegmentRecord] = []
    for p in paths:
        out.extend(read_shard(p))
    return out

"""Polyphonic segment types: the nested (pitch, duration) surface structure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

NUM_PITCHES = 128
DEFAULT_STEPS = 32
DURATION_BITS = 5
MAX_DURATION = 1 << DURATION_BITS


class SegmentError(ValueError):
    """Raised when a segment violates its structural invariants."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        lines = ", ".join(f"(t={v.t}, k={v.k}, {v.rule})" for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" and {len(self.violations) - 5} more"
        super().__init__(f"invalid segment: {lines}{more}")


class Note(NamedTuple):
    pitch: int
    duration: int


class Violation(NamedTuple):
    t: int
    k: int
    rule: str


@dataclass(frozen=True)
class PolySegment:
    """A ``num_steps``-long segment; ``onsets[t]`` holds the notes starting at step t.

    Each onset list is sorted strictly ascending by pitch. Construction does
    not validate; call :func:`validate` or :meth:`checked`.
    """

    onsets: tuple[tuple[Note, ...], ...]
    num_steps: int = DEFAULT_STEPS

    @classmethod
    def empty(cls, num_steps: int = DEFAULT_STEPS) -> "PolySegment":
        return cls(tuple(() for _ in range(num_steps)), num_steps)

    @classmethod
    def from_lists(cls, onsets: Iterable[Iterable[Sequence[int]]], num_steps: int | None = None) -> "PolySegment":
        rows = tuple(tuple(Note(int(p), int(d)) for p, d in row) for row in onsets)
        if num_steps is None:
            num_steps = len(rows)
        return cls(rows, num_steps)

    @classmethod
    def from_notes(cls, notes: Iterable[Sequence[int]], num_steps: int = DEFAULT_STEPS) -> "PolySegment":
        """Build from ``(onset, pitch, duration)`` triples, sorting each onset by pitch."""
        rows: list[list[Note]] = [[] for _ in range(num_steps)]
        for t, p, d in notes:
            rows[int(t)].append(Note(int(p), int(d)))
        return cls(tuple(tuple(sorted(r)) for r in rows), num_steps)

    def notes(self) -> list[tuple[int, int, int]]:
        """Flat ``(onset, pitch, duration)`` list in onset-then-pitch order."""
        return [(t, n.pitch, n.duration) for t, row in enumerate(self.onsets) for n in row]

    def num_notes(self) -> int:
        return sum(len(row) for row in self.onsets)

    def to_lists(self) -> list[list[list[int]]]:
        return [[[n.pitch, n.duration] for n in row] for row in self.onsets]

    def checked(self) -> "PolySegment":
        violations = validate(self)
        if violations:
            raise SegmentError(violations)
        return self


def validate(seg: PolySegment) -> list[Violation]:
    """Return every invariant violation as ``(t, k, rule)``; empty iff valid.

    ``k = -1`` marks a violation of the segment as a whole.
    """
    out: list[Violation] = []
    if seg.num_steps < 1:
        out.append(Violation(-1, -1, "num_steps must be positive"))
    if len(seg.onsets) != seg.num_steps:
        out.append(Violation(-1, -1, f"expected {seg.num_steps} onset lists, got {len(seg.onsets)}"))
    for t, row in enumerate(seg.onsets):
        prev = None
        for k, note in enumerate(row):
            p, d = note
            if not isinstance(p, int) or not 0 <= p < NUM_PITCHES:
                out.append(Violation(t, k, f"pitch {p!r} outside [0, 127]"))
            if not isinstance(d, int) or d < 1:
                out.append(Violation(t, k, f"duration {d!r} below 1"))
            elif t + d > seg.num_steps:
                out.append(Violation(t, k, f"note ends at {t + d}, past segment end {seg.num_steps}"))
            if prev is not None and isinstance(p, int) and isinstance(prev, int):
                if p == prev:
                    out.append(Violation(t, k, f"duplicate pitch {p}"))
                elif p < prev:
                    out.append(Violation(t, k, f"pitch {p} not above previous {prev}"))
            prev = p
    return out


def canonicalize(
    notes: Iterable[Sequence[int]], num_steps: int = DEFAULT_STEPS
) -> PolySegment:
    """Make a valid segment from arbitrary ``(onset, pitch, duration)`` triples.

    Out-of-range onsets and pitches are dropped, durations are clipped to
    ``[1, num_steps - onset]`` and same-onset duplicate pitches keep the longer
    duration.
    """
    best: dict[tuple[int, int], int] = {}
    for t, p, d in notes:
        t, p, d = int(t), int(p), int(d)
        if not (0 <= t < num_steps and 0 <= p < NUM_PITCHES):
            continue
        d = min(max(d, 1), num_steps - t)
        if best.get((t, p), 0) < d:
            best[(t, p)] = d
    return PolySegment.from_notes(((t, p, d) for (t, p), d in best.items()), num_steps)


def transpose(seg: PolySegment, semitones: int) -> PolySegment:
    """Shift every pitch; notes pushed outside [0, 127] are dropped."""
    rows = []
    for row in seg.onsets:
        rows.append(
            tuple(Note(n.pitch + semitones, n.duration) for n in row if 0 <= n.pitch + semitones < NUM_PITCHES)
        )
    return PolySegment(tuple(rows), seg.num_steps)


def encode_duration(d: int) -> tuple[int, ...]:
    """Binary code of ``d - 1``, most significant bit first."""
    if isinstance(d, bool) or not isinstance(d, int) or not 1 <= d <= MAX_DURATION:
        raise ValueError(f"duration {d!r} outside [1, {MAX_DURATION}]")
    v = d - 1
    return tuple((v >> (DURATION_BITS - 1 - i)) & 1 for i in range(DURATION_BITS))


def decode_duration(code: Sequence[int]) -> int:
    if len(code) != DURATION_BITS:
        raise ValueError(f"duration code must have {DURATION_BITS} digits, got {len(code)}")
    v = 0
    for b in code:
        if b != 0 and b != 1:
            raise ValueError(f"non-binary digit {b!r} in duration code")
        v = (v << 1) | int(b)
    return v + 1

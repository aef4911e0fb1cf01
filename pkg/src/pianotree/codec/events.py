"""MIDI-like event tokens: note-on, note-off and time-shift.

Token ids::

    0..127    note-on(pitch)
    128..255  note-off(pitch)
    256..287  time-shift(1..32 steps)
"""

from __future__ import annotations

from collections import deque

from .segment import DEFAULT_STEPS, NUM_PITCHES, PolySegment

NOTE_OFF_BASE = NUM_PITCHES
TIME_SHIFT_BASE = 2 * NUM_PITCHES
MAX_SHIFT = 32
VOCAB_SIZE = TIME_SHIFT_BASE + MAX_SHIFT

ILLEGAL_KINDS = (
    "dangling-note-on",
    "orphan-note-off",
    "overflow-time",
    "zero-duration",
    "duplicate-note-on",
    "unknown-token",
)


class IllegalSequence(ValueError):
    def __init__(self, index: int, kind: str):
        self.index = index
        self.kind = kind
        super().__init__(f"illegal event sequence at token {index}: {kind}")


def note_on(pitch: int) -> int:
    return pitch


def note_off(pitch: int) -> int:
    return NOTE_OFF_BASE + pitch


def time_shift(steps: int) -> int:
    if not 1 <= steps <= MAX_SHIFT:
        raise ValueError(f"time shift {steps} outside [1, {MAX_SHIFT}]")
    return TIME_SHIFT_BASE + steps - 1


def describe(token: int) -> str:
    if 0 <= token < NOTE_OFF_BASE:
        return f"note-on({token})"
    if NOTE_OFF_BASE <= token < TIME_SHIFT_BASE:
        return f"note-off({token - NOTE_OFF_BASE})"
    if TIME_SHIFT_BASE <= token < VOCAB_SIZE:
        return f"time-shift({token - TIME_SHIFT_BASE + 1})"
    return f"<unknown {token}>"


def _shifts(gap: int) -> list[int]:
    out = []
    while gap > 0:
        step = min(gap, MAX_SHIFT)
        out.append(time_shift(step))
        gap -= step
    return out


def to_event_sequence(seg: PolySegment) -> list[int]:
    """Serialize chronologically; at equal times note-offs precede note-ons.

    A final time-shift always runs up to ``num_steps`` so the segment length
    survives the round trip.
    """
    starts: dict[int, list[int]] = {}
    ends: dict[int, list[int]] = {}
    for t, p, d in seg.notes():
        starts.setdefault(t, []).append(p)
        ends.setdefault(t + d, []).append(p)
    times = sorted(set(starts) | set(ends) | {seg.num_steps})
    tokens: list[int] = []
    cursor = 0
    for tau in times:
        tokens.extend(_shifts(tau - cursor))
        cursor = tau
        tokens.extend(note_off(p) for p in sorted(ends.get(tau, ())))
        tokens.extend(note_on(p) for p in sorted(starts.get(tau, ())))
    return tokens


def from_event_sequence(tokens: list[int], num_steps: int = DEFAULT_STEPS) -> PolySegment:
    """Parse tokens into a segment, raising :class:`IllegalSequence` if malformed.

    Note-offs close the earliest open note of their pitch. A sequence whose
    time-shifts total less than ``num_steps`` is padded with silence.
    """
    time = 0
    active: dict[int, deque[tuple[int, int]]] = {}
    notes: list[tuple[int, int, int]] = []
    for i, tok in enumerate(tokens):
        if isinstance(tok, bool) or not isinstance(tok, int) or not 0 <= tok < VOCAB_SIZE:
            raise IllegalSequence(i, "unknown-token")
        if tok < NOTE_OFF_BASE:
            queue = active.setdefault(tok, deque())
            if any(start == time for start, _ in queue):
                raise IllegalSequence(i, "duplicate-note-on")
            queue.append((time, i))
        elif tok < TIME_SHIFT_BASE:
            pitch = tok - NOTE_OFF_BASE
            queue = active.get(pitch)
            if not queue:
                raise IllegalSequence(i, "orphan-note-off")
            start, _ = queue.popleft()
            if start == time:
                raise IllegalSequence(i, "zero-duration")
            notes.append((start, pitch, time - start))
        else:
            time += tok - TIME_SHIFT_BASE + 1
            if time > num_steps:
                raise IllegalSequence(i, "overflow-time")
    dangling = [idx for queue in active.values() for _, idx in queue]
    if dangling:
        raise IllegalSequence(min(dangling), "dangling-note-on")
    return PolySegment.from_notes(notes, num_steps)

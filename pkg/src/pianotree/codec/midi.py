"""Standard MIDI file ingestion and rendering on the semiquaver grid.

Quantization works in ticks, so tempo never affects the grid. A piece is
accepted only if every time signature in it is 2/4 or 4/4; segments are cut
every ``num_steps`` grid steps from the first time-signature event, which is
taken as the first downbeat. Material before it (a pickup) is dropped.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mido

from .segment import DEFAULT_STEPS, PolySegment, canonicalize

log = logging.getLogger(__name__)

STEPS_PER_BEAT = 4
ACCEPTED_METERS = {(2, 4), (4, 4)}
DRUM_CHANNEL = 9


class MidiIngestError(ValueError):
    """The bytes are not a readable standard MIDI file."""


@dataclass
class IngestResult:
    segments: list[PolySegment]
    meters: list[tuple[int, int]] = field(default_factory=list)
    skip_reason: str | None = None


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def ingest_midi(
    data: bytes, num_steps: int = DEFAULT_STEPS, steps_per_beat: int = STEPS_PER_BEAT
) -> IngestResult:
    """Parse MIDI bytes into segments, recording why a piece was skipped."""
    try:
        mid = mido.MidiFile(file=io.BytesIO(data))
    except Exception as exc:  # mido raises a zoo of types on corrupt input
        raise MidiIngestError(f"cannot parse MIDI data: {exc}") from exc
    if mid.type == 2:
        raise MidiIngestError("format 2 (asynchronous) MIDI files are not supported")

    meters: list[tuple[int, int, int]] = []
    raw_notes: list[tuple[int, int, int]] = []
    end_tick = 0
    for track in mid.tracks:
        tick = 0
        open_notes: dict[tuple[int, int], list[int]] = {}
        for msg in track:
            tick += msg.time
            if msg.type == "time_signature":
                meters.append((tick, msg.numerator, msg.denominator))
            elif msg.type in ("note_on", "note_off"):
                if msg.channel == DRUM_CHANNEL:
                    continue
                key = (msg.channel, msg.note)
                if msg.type == "note_on" and msg.velocity > 0:
                    open_notes.setdefault(key, []).append(tick)
                elif open_notes.get(key):
                    start = open_notes[key].pop(0)
                    raw_notes.append((start, tick, msg.note))
        for (_, pitch), starts in open_notes.items():
            raw_notes.extend((s, tick, pitch) for s in starts)
        end_tick = max(end_tick, tick)

    meter_set = sorted({(n, d) for _, n, d in meters})
    if not meters:
        log.warning("skipping MIDI piece without a time signature")
        return IngestResult([], [], "missing-meter")
    if any(m not in ACCEPTED_METERS for m in meter_set):
        return IngestResult([], meter_set, "meter")

    origin = min(t for t, _, _ in meters)
    tpb = mid.ticks_per_beat

    def to_step(tick: int) -> int:
        return _round_half_up(Fraction((tick - origin) * steps_per_beat, tpb))

    end_step = to_step(end_tick)
    per_segment: dict[int, list[tuple[int, int, int]]] = {}
    for on, off, pitch in raw_notes:
        s_on, s_off = to_step(on), to_step(off)
        if s_on < 0:
            continue
        end_step = max(end_step, s_off)
        idx, t = divmod(s_on, num_steps)
        per_segment.setdefault(idx, []).append((t, pitch, max(1, s_off - s_on)))
    n_segments = math.ceil(end_step / num_steps) if end_step > 0 else 0
    segments = [canonicalize(per_segment.get(i, ()), num_steps) for i in range(n_segments)]
    return IngestResult(segments, meter_set, None)


def from_midi(
    data: bytes, num_steps: int = DEFAULT_STEPS, steps_per_beat: int = STEPS_PER_BEAT
) -> list[PolySegment]:
    return ingest_midi(data, num_steps, steps_per_beat).segments


def _layers(notes) -> list[list[tuple[int, int, int]]]:
    # Overlapping notes of one pitch go to separate tracks so every note-off is unambiguous.
    layers: list[list[tuple[int, int, int]]] = []
    busy_until: list[dict[int, int]] = []
    for t, p, d in sorted(notes):
        for i, busy in enumerate(busy_until):
            if busy.get(p, 0) <= t:
                break
        else:
            layers.append([])
            busy_until.append({})
            i = len(layers) - 1
        layers[i].append((t, p, d))
        busy_until[i][p] = t + d
    return layers


def _track(events: list[tuple[int, int, mido.Message]], end_tick: int) -> mido.MidiTrack:
    track = mido.MidiTrack()
    now = 0
    for tick, _, msg in sorted(events, key=lambda e: (e[0], e[1], getattr(e[2], "note", 0))):
        track.append(msg.copy(time=tick - now))
        now = tick
    track.append(mido.MetaMessage("end_of_track", time=max(0, end_tick - now)))
    return track


def render_midi(
    notes,
    total_steps: int,
    tempo_bpm: float = 120.0,
    ticks_per_beat: int = 480,
    velocity: int = 80,
) -> bytes:
    """Format-1 MIDI in 4/4 for grid ``(onset, pitch, duration)`` notes."""
    if tempo_bpm <= 0:
        raise ValueError("tempo must be positive")
    if ticks_per_beat % STEPS_PER_BEAT:
        raise ValueError(f"ticks_per_beat must be divisible by {STEPS_PER_BEAT}")
    step = ticks_per_beat // STEPS_PER_BEAT
    end_tick = total_steps * step

    mid = mido.MidiFile(type=1, ticks_per_beat=ticks_per_beat)
    conductor = [
        (0, 0, mido.MetaMessage("set_tempo", tempo=mido.bpm2tempo(tempo_bpm))),
        (0, 0, mido.MetaMessage("time_signature", numerator=4, denominator=4)),
    ]
    mid.tracks.append(_track(conductor, end_tick))
    for layer in _layers(notes):
        events = []
        for t, p, d in layer:
            events.append((t * step, 1, mido.Message("note_on", note=p, velocity=velocity)))
            events.append(((t + d) * step, 0, mido.Message("note_off", note=p, velocity=0)))
        mid.tracks.append(_track(events, end_tick))
    buf = io.BytesIO()
    mid.save(file=buf)
    return buf.getvalue()


def to_midi(
    seg: PolySegment, tempo_bpm: float = 120.0, ticks_per_beat: int = 480, velocity: int = 80
) -> bytes:
    """Render one segment; :func:`from_midi` reads it back as ``[seg]``."""
    seg.checked()
    return render_midi(seg.notes(), seg.num_steps, tempo_bpm, ticks_per_beat, velocity)

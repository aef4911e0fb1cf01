"""Small deterministic piano corpus for smoke tests and overfit runs.

Songs are 4/4, in a random major key: a bass note on each downbeat, block
triads on beats two and four, and a scale-wise melody on top.
"""

from __future__ import annotations

import numpy as np

from ..codec.midi import render_midi

MAJOR = (0, 2, 4, 5, 7, 9, 11)
PROGRESSIONS = (
    (0, 3, 4, 0),
    (0, 5, 3, 4),
    (0, 4, 5, 3),
    (1, 4, 0, 0),
    (0, 3, 1, 4),
)
RHYTHMS = (
    (4, 4, 4, 4),
    (2, 2, 4, 4, 4),
    (4, 2, 2, 8),
    (8, 4, 4),
    (2, 2, 2, 2, 4, 4),
    (6, 2, 4, 4),
)
BAR = 16


def _triad(key: int, degree: int, base: int) -> list[int]:
    """Closed triad on a scale degree, voiced upward from ``base``."""
    pcs = [(key + MAJOR[(degree + i) % 7]) % 12 for i in (0, 2, 4)]
    out, floor = [], base
    for pc in pcs:
        p = floor + (pc - floor) % 12
        out.append(p)
        floor = p + 1
    return out


def desk_song(rng: np.random.Generator, n_bars: int) -> list[tuple[int, int, int]]:
    key = int(rng.integers(0, 12))
    prog = PROGRESSIONS[int(rng.integers(len(PROGRESSIONS)))]
    scale = [60 + o * 12 + (key + s) % 12 for o in (1, 2) for s in MAJOR]
    scale.sort()
    melody_i = int(rng.integers(3, 8))
    notes = []
    for bar in range(n_bars):
        degree = prog[bar % len(prog)]
        start = bar * BAR
        root = 36 + (key + MAJOR[degree]) % 12
        notes.append((start, root, 8 if rng.random() < 0.5 else 16))
        for beat in (4, 12):
            for p in _triad(key, degree, 53):
                notes.append((start + beat, p, 4))
        t = start
        for d in RHYTHMS[int(rng.integers(len(RHYTHMS)))]:
            melody_i = int(np.clip(melody_i + rng.integers(-2, 3), 0, len(scale) - 1))
            notes.append((t, scale[melody_i], d))
            t += d
    return notes


def desk_corpus(n_songs: int = 8, bars_per_song: int = 16, seed: int = 0) -> dict[str, bytes]:
    """``{song_id: MIDI bytes}``; 16 bars give 8 segments of 32 steps each."""
    rng = np.random.default_rng(seed)
    out = {}
    for i in range(n_songs):
        notes = desk_song(rng, bars_per_song)
        out[f"desk-{i:03d}"] = render_midi(notes, bars_per_song * BAR, tempo_bpm=float(rng.integers(70, 140)))
    return out

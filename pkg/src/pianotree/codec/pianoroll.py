"""Three-state piano-roll view of a segment."""

from __future__ import annotations

import numpy as np

from .segment import NUM_PITCHES, PolySegment

REST = 0
ONSET = 1
SUSTAIN = 2


def to_pianoroll(seg: PolySegment) -> np.ndarray:
    """``(num_steps, 128)`` uint8 grid of REST/ONSET/SUSTAIN labels.

    Sustains are painted first so that a later onset of the same pitch
    overwrites the earlier note's tail.
    """
    grid = np.full((seg.num_steps, NUM_PITCHES), REST, dtype=np.uint8)
    for t, p, d in seg.notes():
        grid[t + 1 : t + d, p] = SUSTAIN
    for t, p, _ in seg.notes():
        grid[t, p] = ONSET
    return grid


def from_pianoroll(grid: np.ndarray) -> PolySegment:
    """Inverse of :func:`to_pianoroll` for rolls without same-pitch overlap."""
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[1] != NUM_PITCHES:
        raise ValueError(f"expected a (T, {NUM_PITCHES}) grid, got shape {grid.shape}")
    steps = grid.shape[0]
    notes = []
    for t, p in zip(*np.nonzero(grid == ONSET)):
        end = t + 1
        while end < steps and grid[end, p] == SUSTAIN:
            end += 1
        notes.append((int(t), int(p), int(end - t)))
    return PolySegment.from_notes(notes, steps)

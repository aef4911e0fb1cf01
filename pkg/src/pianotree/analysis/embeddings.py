"""PCA exports of note and simu_note (chord) embeddings."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..codec.segment import encode_duration
from ..model.batch import EOS, SOS

NOTE_PITCHES = range(24, 108)
NOTE_DURATIONS = range(1, 17)
CHORD_BASE = 48
CHORD_OCTAVES = 3
CHORD_DURATION = 4

QUALITIES = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
}
ROOTS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
NAMES = ("C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B")

PRESETS = {
    "major12": [f"{n}:maj" for n in NAMES],
    "cmajor-diatonic": ["C:maj", "D:min", "E:min", "F:maj", "G:maj", "A:min", "B:dim"],
}


@dataclass
class EmbeddingExport:
    label_columns: list[str]
    labels: list[tuple]
    vectors: np.ndarray
    projection: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    meta: dict = field(default_factory=dict)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.label_columns, "pc1", "pc2", "pc3"])
            for label, row in zip(self.labels, self.projection):
                w.writerow([*label, *(f"{v:.8g}" for v in row)])

    def metadata(self) -> dict:
        total = float(np.sum(self.meta.get("total_variance", 0.0)))
        return {
            "rows": len(self.labels),
            "dim": int(self.vectors.shape[1]),
            "explained_variance": [float(v) for v in self.explained_variance],
            "explained_variance_ratio": [float(v) / total if total else 0.0 for v in self.explained_variance],
            **{k: v for k, v in self.meta.items() if k != "total_variance"},
        }

    def write_metadata(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.metadata(), **extra}, indent=1) + "\n")


def pca(vectors: np.ndarray, n_components: int = 3) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Projection, orthonormal components, per-component variance and total variance.

    Each component is sign-fixed so its largest-magnitude coordinate is positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    centered = x - x.mean(0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:n_components].copy()
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1
    denom = max(len(x) - 1, 1)
    var = s[:n_components] ** 2 / denom
    if len(var) < n_components:
        pad = n_components - len(var)
        var = np.pad(var, (0, pad))
        comps = np.vstack([comps, np.zeros((pad, x.shape[1]))])
    return centered @ comps.T, comps, var, float((s**2).sum() / denom)


def _export(label_columns, labels, vectors, meta) -> EmbeddingExport:
    proj, comps, var, total = pca(vectors)
    return EmbeddingExport(label_columns, labels, vectors, proj, comps, var, {**meta, "total_variance": total})


@torch.no_grad()
def export_note_embedding_grid(
    model, pitches: Sequence[int] = NOTE_PITCHES, durations: Sequence[int] = NOTE_DURATIONS
) -> EmbeddingExport:
    """Encoder note embeddings for every (pitch, duration) pair."""
    labels = [(p, d) for p in pitches for d in durations]
    w = model.note_embedding.linear.weight
    pitch = torch.tensor([p for p, _ in labels], device=w.device)
    bits = torch.tensor([encode_duration(d) for _, d in labels], dtype=w.dtype, device=w.device)
    vec = model.note_embedding(pitch, bits).cpu().double().numpy()
    meta = {"kind": "note", "pitches": [min(pitches), max(pitches)], "durations": [min(durations), max(durations)]}
    return _export(["pitch", "duration"], labels, vec, meta)


def parse_chord(label: str) -> tuple[int, ...]:
    """Pitch classes of a ``Root:quality`` label such as ``"F#:min"``."""
    try:
        root, quality = label.split(":")
    except ValueError:
        raise ValueError(f"chord label {label!r} is not of the form Root:quality") from None
    if quality not in QUALITIES:
        raise ValueError(f"unknown chord quality {quality!r}; known: {', '.join(QUALITIES)}")
    if not root or root[0] not in ROOTS:
        raise ValueError(f"unknown chord root {root!r}")
    pc = ROOTS[root[0]]
    for acc in root[1:]:
        if acc == "#":
            pc += 1
        elif acc == "b":
            pc -= 1
        else:
            raise ValueError(f"unknown chord root {root!r}")
    return tuple(sorted((pc + i) % 12 for i in QUALITIES[quality]))


def chord_spec(spec: str | Sequence[str]) -> list[str]:
    if isinstance(spec, str):
        if spec in PRESETS:
            return list(PRESETS[spec])
        spec = [s.strip() for s in spec.split(",") if s.strip()]
    for label in spec:
        parse_chord(label)
    return list(spec)


def voicings(pcs: Sequence[int], base: int = CHORD_BASE, octaves: int = CHORD_OCTAVES) -> list[tuple[int, ...]]:
    """Every pitch set in ``[base, base + 12 * octaves)`` whose pitch-class set is ``pcs``."""
    per_pc = []
    for pc in sorted(set(pcs)):
        slots = [base + (pc - base) % 12 + 12 * o for o in range(octaves)]
        per_pc.append([c for r in range(1, octaves + 1) for c in itertools.combinations(slots, r)])
    return [tuple(sorted(itertools.chain(*choice))) for choice in itertools.product(*per_pc)]


@torch.no_grad()
def simu_note_embeddings(model, chords: Sequence[Sequence[int]], duration: int = CHORD_DURATION) -> np.ndarray:
    """Encoder simu_note summaries of single-onset chords, all notes of one duration."""
    w = model.note_embedding.linear.weight
    L = max(len(c) for c in chords) + 2
    tok = torch.full((len(chords), L), EOS, dtype=torch.long)
    bits = torch.zeros((len(chords), L, 5), dtype=w.dtype)
    code = torch.tensor(encode_duration(duration), dtype=w.dtype)
    tok[:, 0] = SOS
    for i, c in enumerate(chords):
        tok[i, 1 : len(c) + 1] = torch.tensor(c)
        bits[i, 1 : len(c) + 1] = code
    lengths = torch.tensor([len(c) + 2 for c in chords])
    return model.summarize_onsets(tok.to(w.device), bits.to(w.device), lengths).cpu().double().numpy()


def export_chord_embeddings(
    model, spec: str | Sequence[str] = "major12", base: int = CHORD_BASE, octaves: int = CHORD_OCTAVES
) -> EmbeddingExport:
    labels_in = chord_spec(spec)
    labels, chords = [], []
    for label in labels_in:
        for v in voicings(parse_chord(label), base, octaves):
            labels.append((label, " ".join(map(str, v))))
            chords.append(v)
    vec = simu_note_embeddings(model, chords)
    meta = {"kind": "chord", "chords": labels_in, "voicings_per_chord": len(chords) // max(len(labels_in), 1),
            "window": [base, base + 12 * octaves - 1], "duration": CHORD_DURATION}
    return _export(["chord", "pitches"], labels, vec, meta)

from .embeddings import (
    PRESETS,
    EmbeddingExport,
    chord_spec,
    export_chord_embeddings,
    export_note_embedding_grid,
    parse_chord,
    pca,
    simu_note_embeddings,
    voicings,
)
from .interpolation import alphas, interpolate, interpolate_latents, slerp
from .metrics import (
    MatchCounts,
    ReconReport,
    aggregate,
    duration_prf,
    match_counts,
    model_reconstructor,
    onset_prf,
    reconstruction_report,
)

__all__ = [
    "PRESETS",
    "EmbeddingExport",
    "MatchCounts",
    "ReconReport",
    "aggregate",
    "alphas",
    "chord_spec",
    "duration_prf",
    "export_chord_embeddings",
    "export_note_embedding_grid",
    "interpolate",
    "interpolate_latents",
    "match_counts",
    "model_reconstructor",
    "onset_prf",
    "parse_chord",
    "pca",
    "reconstruction_report",
    "simu_note_embeddings",
    "slerp",
    "voicings",
]

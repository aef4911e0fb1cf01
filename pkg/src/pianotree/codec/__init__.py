from .events import IllegalSequence, from_event_sequence, to_event_sequence
from .midi import IngestResult, MidiIngestError, from_midi, ingest_midi, render_midi, to_midi
from .pianoroll import ONSET, REST, SUSTAIN, from_pianoroll, to_pianoroll
from .segment import (
    DEFAULT_STEPS,
    DURATION_BITS,
    Note,
    PolySegment,
    SegmentError,
    Violation,
    canonicalize,
    decode_duration,
    encode_duration,
    transpose,
    validate,
)
from .shards import SegmentRecord, read_shard, read_shards, write_shard

__all__ = [
    "DEFAULT_STEPS",
    "DURATION_BITS",
    "IllegalSequence",
    "IngestResult",
    "MidiIngestError",
    "Note",
    "ONSET",
    "PolySegment",
    "REST",
    "SUSTAIN",
    "SegmentError",
    "SegmentRecord",
    "Violation",
    "canonicalize",
    "decode_duration",
    "encode_duration",
    "from_event_sequence",
    "from_midi",
    "from_pianoroll",
    "ingest_midi",
    "read_shard",
    "render_midi",
    "read_shards",
    "to_event_sequence",
    "to_midi",
    "to_pianoroll",
    "transpose",
    "validate",
    "write_shard",
]

"""``pianotree`` command line: preprocess, train, eval, interpolate, sample, export-embeddings.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 runtime failure.
Log verbosity comes from ``PIANOTREE_LOG_LEVEL`` (default ``INFO``).
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import torch

from . import __version__
from .codec import MidiIngestError, SegmentError, SegmentRecord, ingest_midi, read_shards, to_midi, write_shard
from .model.checkpoint import CheckpointError, load_checkpoint
from .model.dims import ModelDims
from .training.config import ConfigError, TrainConfig, dump_config, load_config
from .training.data import CorpusIndex, SongEntry, split_dataset
from .training.loop import TrainingDiverged, train

log = logging.getLogger("pianotree")

LOG_ENV = "PIANOTREE_LOG_LEVEL"
MANIFEST = "manifest.json"
INDEX = "index.json"
SKIPPED = "skipped.jsonl"
SHARD_SIZE = 4096
MIDI_SUFFIXES = {".mid", ".midi"}

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, args: argparse.Namespace, inputs: dict, outputs: Sequence[Path], seed) -> Path:
    """Record enough to re-run the command, plus checksums of what it wrote."""
    argv = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "args": argv,
        "config": str(args.config) if getattr(args, "config", None) else None,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {p.relative_to(out).as_posix(): sha256(p) for p in sorted(outputs)},
        "seed": seed,
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command}: --out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoint(args):
    path = Path(args.checkpoint)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        model, payload = load_checkpoint(path, args.device)
    except CheckpointError as exc:
        raise DataError(str(exc)) from exc
    model.eval()
    return model, path


def _seed(args, default: int = 0) -> int:
    return default if args.seed is None else args.seed


# preprocess


def cmd_preprocess(args) -> int:
    src = Path(args.midi_dir)
    if not src.is_dir():
        raise DataError(f"not a directory: {src}")
    files = sorted(p for p in src.rglob("*") if p.suffix.lower() in MIDI_SUFFIXES and p.is_file())
    if not files:
        raise DataError(f"no MIDI files under {src}")
    ratio, seed = 0.9, 0
    if args.config:
        _, cfg = load_config(args.config)
        ratio, seed = cfg.split_ratio, cfg.seed
    seed = _seed(args, seed)
    out = _out_dir(args)

    songs: list[SongEntry] = []
    records: dict[str, list[SegmentRecord]] = {}
    skipped = []
    for path in files:
        rel = path.relative_to(src).as_posix()
        song_id = rel.rsplit(".", 1)[0]
        try:
            result = ingest_midi(path.read_bytes())
        except (MidiIngestError, OSError) as exc:
            log.warning("skipping %s: %s", rel, exc)
            skipped.append({"path": rel, "reason": "parse", "detail": str(exc)})
            continue
        if result.skip_reason is not None:
            detail = ", ".join(f"{n}/{d}" for n, d in result.meters) or "no time signature"
            log.info("skipping %s: %s (%s)", rel, result.skip_reason, detail)
            skipped.append({"path": rel, "reason": result.skip_reason, "detail": detail})
            continue
        if not result.segments:
            skipped.append({"path": rel, "reason": "empty", "detail": "no notes after the first downbeat"})
            continue
        recs = [SegmentRecord(f"{song_id}/{i:04d}", song_id, s) for i, s in enumerate(result.segments)]
        records[song_id] = recs
        meter = list(result.meters[0]) if len(result.meters) == 1 else [m for pair in result.meters for m in pair]
        songs.append(SongEntry(song_id, rel, meter, [r.segment_id for r in recs]))

    if len(songs) >= 2:
        train_ids, _ = split_dataset([s.song_id for s in songs], ratio, seed)
        train_set = set(train_ids)
    else:
        log.warning("fewer than 2 usable songs; everything goes to the train split")
        train_set = {s.song_id for s in songs}
    for s in songs:
        s.split = "train" if s.song_id in train_set else "test"

    written: list[Path] = []
    index = CorpusIndex(songs)
    for split in ("train", "test"):
        recs = [r for s in songs if s.split == split for r in records[s.song_id]]
        for k in range(0, len(recs), SHARD_SIZE):
            name = f"{split}-{k // SHARD_SIZE:05d}.jsonl"
            write_shard(out / name, recs[k : k + SHARD_SIZE])
            index.shards.append(name)
            written.append(out / name)
    index.save(out / INDEX)
    with open(out / SKIPPED, "w", newline="\n") as fh:
        for row in skipped:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    written += [out / INDEX, out / SKIPPED]
    write_manifest(out, args, {"midi_dir": src}, written, seed)
    n_seg = sum(len(r) for r in records.values())
    print(f"{len(songs)} songs, {n_seg} segments, {len(skipped)} skipped -> {out}")
    return EXIT_OK


def load_records(data: str | Path, split: str = "all") -> list[SegmentRecord]:
    """Records from a preprocessed directory (filtered by split) or a single shard file."""
    data = Path(data)
    try:
        if data.is_file():
            return read_shards([data])
        if not (data / INDEX).is_file():
            raise DataError(f"no {INDEX} in {data}")
        index = CorpusIndex.load(data / INDEX)
        recs = read_shards(data / s for s in index.shards)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read data from {data}: {exc}") from exc
    if split != "all":
        keep = index.songs_in(split)
        recs = [r for r in recs if r.song_id in keep]
    return recs


# train


def cmd_train(args) -> int:
    if not args.config:
        raise UsageError("train: --config is required")
    dims, cfg = load_config(args.config)
    if args.seed is not None:
        cfg = TrainConfig(**{**cfg.to_dict(), "seed": args.seed})
    records = load_records(args.data, "train")
    if not records:
        raise DataError(f"no training segments in {args.data}")
    if args.dry_run:
        print(f"config ok: {len(records)} training segments, batch size {cfg.batch_size}")
        return EXIT_OK
    out = _out_dir(args)
    (out / "config.yaml").write_text(dump_config(dims, cfg))
    result = train(cfg, dims, records, out, resume=args.resume, device=args.device)
    outputs = [out / "config.yaml", out / "metrics.jsonl", *sorted(out.glob("*.pt"))]
    write_manifest(out, args, {"data": args.data}, outputs, cfg.seed)
    print(f"trained to step {result.step} -> {out}")
    return EXIT_OK


# eval


def cmd_eval(args) -> int:
    from .analysis.metrics import reconstruction_report

    model, ckpt = _checkpoint(args)
    records = load_records(args.data, args.split)
    if not records:
        raise DataError(f"no segments in {args.data} (split {args.split})")
    out = _out_dir(args)
    report = reconstruction_report(model, [r.segment for r in records], args.mode, seed=_seed(args))
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.table() + "\n")
    write_manifest(out, args, {"checkpoint": ckpt, "data": args.data},
                   [out / "report.json", out / "report.txt"], _seed(args))
    print(report.table())
    return EXIT_OK


# interpolate / sample


def _read_segment(path: str | Path, index: int):
    try:
        result = ingest_midi(Path(path).read_bytes())
    except (OSError, MidiIngestError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if result.skip_reason is not None:
        raise DataError(f"{path} rejected: {result.skip_reason}")
    if not 0 <= index < len(result.segments):
        raise DataError(f"{path} has {len(result.segments)} segments, asked for index {index}")
    return result.segments[index]


def cmd_interpolate(args) -> int:
    from .analysis.interpolation import interpolate

    model, ckpt = _checkpoint(args)
    if args.n < 2:
        raise UsageError("interpolate: -n must be at least 2")
    seg_a = _read_segment(args.seg_a, args.segment_a)
    seg_b = _read_segment(args.seg_b, args.segment_b)
    out = _out_dir(args)
    written = []
    for i, (alpha, seg) in enumerate(interpolate(model, seg_a, seg_b, args.n)):
        path = out / f"interp-{i:03d}-alpha-{alpha:.4f}.mid"
        path.write_bytes(to_midi(seg))
        written.append(path)
    write_manifest(out, args, {"checkpoint": ckpt, "seg_a": args.seg_a, "seg_b": args.seg_b},
                   written, _seed(args))
    print(f"{len(written)} files -> {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .model.api import generate

    model, ckpt = _checkpoint(args)
    if args.count < 1:
        raise UsageError("sample: --count must be positive")
    seed = _seed(args)
    out = _out_dir(args)
    gen = torch.Generator().manual_seed(seed)
    z = torch.randn((args.count, model.dims.z_dim), generator=gen).to(model.fc_mu.weight)
    written = []
    for i, seg in enumerate(generate(model, z)):
        path = out / f"sample-{i:04d}.mid"
        path.write_bytes(to_midi(seg))
        written.append(path)
    write_manifest(out, args, {"checkpoint": ckpt}, written, seed)
    print(f"{len(written)} samples -> {out}")
    return EXIT_OK


# export-embeddings


def cmd_export_embeddings(args) -> int:
    from .analysis.embeddings import export_chord_embeddings, export_note_embedding_grid

    model, ckpt = _checkpoint(args)
    if args.which == "note":
        export = export_note_embedding_grid(model)
    else:
        try:
            export = export_chord_embeddings(model, args.chords)
        except ValueError as exc:
            raise UsageError(f"export-embeddings: {exc}") from exc
    out = _out_dir(args)
    csv_path, meta_path = out / f"{args.which}_embeddings.csv", out / f"{args.which}_embeddings.json"
    export.write_csv(csv_path)
    export.write_metadata(meta_path, checkpoint=ckpt.name, checkpoint_sha256=sha256(ckpt))
    write_manifest(out, args, {"checkpoint": ckpt}, [csv_path, meta_path], _seed(args))
    print(f"{len(export.labels)} rows -> {csv_path}")
    return EXIT_OK


def cmd_default_config(args) -> int:
    text = dump_config(ModelDims(), TrainConfig())
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML file with 'model' and 'train' sections")
    common.add_argument("--seed", type=int, default=None, help="single source of randomness")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--device", default="cpu")

    p = _Parser(prog="pianotree", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("preprocess", parents=[common], help="MIDI directory -> segment shards")
    s.add_argument("midi_dir")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", parents=[common], help="train a model on preprocessed shards")
    s.add_argument("data", help="preprocessed directory or shard file")
    s.add_argument("--resume", action="store_true", help="continue from OUT/last.pt")
    s.add_argument("--dry-run", action="store_true", help="validate config and data, then exit")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="reconstruction precision/recall/F1")
    s.add_argument("checkpoint")
    s.add_argument("data")
    s.add_argument("--split", choices=("train", "test", "all"), default="test")
    s.add_argument("--mode", choices=("posterior-mean", "sampled"), default="posterior-mean")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("interpolate", parents=[common], help="decode points between two segments")
    s.add_argument("checkpoint")
    s.add_argument("seg_a")
    s.add_argument("seg_b")
    s.add_argument("-n", type=int, default=8, help="number of points including both ends")
    s.add_argument("--segment-a", type=int, default=0, help="segment index within seg_a")
    s.add_argument("--segment-b", type=int, default=0, help="segment index within seg_b")
    s.set_defaults(func=cmd_interpolate)

    s = sub.add_parser("sample", parents=[common], help="decode latent codes drawn from the prior")
    s.add_argument("checkpoint")
    s.add_argument("--count", type=int, default=16)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("export-embeddings", parents=[common], help="PCA of note or chord embeddings")
    s.add_argument("checkpoint")
    s.add_argument("--which", choices=("note", "chord"), default="note")
    s.add_argument("--chords", default="major12",
                   help="preset (major12, cmajor-diatonic) or comma list such as C:maj,A:min")
    s.set_defaults(func=cmd_export_embeddings)

    s = sub.add_parser("default-config", parents=[common], help="print or write the default config")
    s.set_defaults(func=cmd_default_config)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get(LOG_ENV, "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SegmentError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

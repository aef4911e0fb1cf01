"""Batched optimization of the negative ELBO."""

from __future__ import annotations

import contextlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..codec.shards import SegmentRecord
from ..model.batch import collate
from ..model.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from ..model.dims import ModelDims
from ..model.vae import PianoTreeVAE
from .config import TrainConfig
from .data import augment
from .schedules import Schedules

log = logging.getLogger(__name__)

LAST = "last.pt"
METRICS = "metrics.jsonl"


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, batch_ids: Sequence[str], report: dict):
        self.step = step
        self.batch_ids = list(batch_ids)
        self.report = report
        super().__init__(f"non-finite loss at step {step} ({report}); batch: {', '.join(self.batch_ids)}")


@dataclass
class TrainResult:
    model: PianoTreeVAE
    step: int
    history: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


@contextlib.contextmanager
def deterministic_mode():
    prev = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(prev)


def step_generator(seed: int, step: int, device="cpu") -> torch.Generator:
    return torch.Generator(device=device).manual_seed(seed * 1_000_003 + step)


def train(
    config: TrainConfig,
    dims: ModelDims,
    records: Sequence[SegmentRecord],
    out_dir: str | Path | None = None,
    *,
    resume: bool = False,
    device: str = "cpu",
) -> TrainResult:
    """Train from scratch (or resume from ``out_dir/last.pt``).

    Writes ``metrics.jsonl`` with one record per optimizer step and a
    checkpoint every ``checkpoint_every`` epochs plus at the end.
    """
    if not records:
        raise ValueError("no training segments")
    data = augment(records) if config.augment else list(records)
    n = len(data)
    steps_per_epoch = math.ceil(n / config.batch_size)
    sched = Schedules(config, steps_per_epoch)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    model = PianoTreeVAE(dims).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=sched.lr_at(0))
    step, start_epoch = 0, 0
    if resume:
        if out is None or not (out / LAST).exists():
            raise FileNotFoundError("resume requested but no checkpoint found")
        payload = read_checkpoint(out / LAST)
        model, _ = load_checkpoint(out / LAST, device)
        opt = torch.optim.Adam(model.parameters(), lr=sched.lr_at(0))
        opt.load_state_dict(payload["optimizer"])
        step, start_epoch = payload["step"], payload["epoch"] + 1
        log.info("resuming at step %d, epoch %d", step, start_epoch)

    result = TrainResult(model, step)
    metrics = open(out / METRICS, "a" if resume else "w") if out is not None else None
    model.train()
    try:
        with deterministic_mode():
            for epoch in range(start_epoch, config.max_epochs):
                if step >= sched.total_steps:
                    break
                tf = sched.tf_rate_at(epoch)
                order = np.random.default_rng([config.seed, epoch]).permutation(n)
                for i in range(0, n, config.batch_size):
                    if step >= sched.total_steps:
                        break
                    batch_recs = [data[j] for j in order[i : i + config.batch_size]]
                    batch = collate([r.segment for r in batch_recs], dims.max_simu_notes).to(device)
                    lr, beta = sched.lr_at(step), sched.beta_at(step)
                    for group in opt.param_groups:
                        group["lr"] = lr
                    gen = step_generator(config.seed, step, device)
                    report, _, _ = model(batch, beta=beta, tf_rate=tf, generator=gen)
                    values = {k: v for k, v in report.as_dict().items()}
                    ids = [r.segment_id for r in batch_recs]
                    if not all(math.isfinite(v) for v in values.values()):
                        raise TrainingDiverged(step, ids, values)
                    opt.zero_grad(set_to_none=True)
                    report.total.backward()
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                    opt.step()
                    rec = {"step": step, "epoch": epoch, **values, "lr": lr, "tf": tf, "batch_ids": ids}
                    result.history.append(rec)
                    if metrics is not None:
                        metrics.write(json.dumps(rec) + "\n")
                        metrics.flush()
                    step += 1
                last_epoch = epoch + 1 == config.max_epochs or step >= sched.total_steps
                if out is not None and ((epoch + 1) % config.checkpoint_every == 0 or last_epoch):
                    extra = {"optimizer": opt.state_dict(), "step": step, "epoch": epoch}
                    path = out / f"epoch-{epoch + 1:04d}.pt"
                    save_checkpoint(path, model, config.to_dict(), **extra)
                    save_checkpoint(out / LAST, model, config.to_dict(), **extra)
                    result.checkpoints.append(path)
    finally:
        if metrics is not None:
            metrics.close()
    result.step = step
    return result

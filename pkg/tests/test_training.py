import json
import math

import numpy as np
import pytest
import torch

from pianotree.codec import SegmentRecord, from_midi
from pianotree.model import ModelDims, PianoTreeVAE, collate
from pianotree.model.checkpoint import load_checkpoint
from pianotree.training import (
    AUGMENT_SHIFTS,
    ConfigError,
    CorpusIndex,
    Schedules,
    SongEntry,
    TrainConfig,
    TrainingDiverged,
    augment,
    desk_corpus,
    dump_config,
    load_config,
    parse_config,
    split_dataset,
    train,
)
from pianotree.training.synthetic import desk_song
from segments import random_segment

MINI = ModelDims.miniature()


def mini_records(n=12, seed=0):
    rng = np.random.default_rng(seed)
    return [SegmentRecord(f"s{i // 3}/{i % 3}", f"s{i // 3}", random_segment(rng, num_steps=4, max_chord=3))
            for i in range(n)]


def small_config(**kw):
    base = dict(batch_size=4, max_epochs=2, augment=False, beta_warmup_steps=4, tf_start=0.8, tf_end=0.0)
    return TrainConfig(**{**base, **kw})


# ---- config ----


def test_default_config_values():
    c = TrainConfig()
    assert (c.batch_size, c.lr_start, c.lr_end, c.tf_start, c.tf_end) == (128, 1e-3, 1e-5, 0.8, 0.0)
    assert c.grad_clip == 5.0 and c.augment


@pytest.mark.parametrize("kw", [
    {"batch_size": 0}, {"lr_end": 2e-3}, {"lr_end": 0}, {"tf_start": 0.2, "tf_end": 0.5},
    {"tf_start": 1.5}, {"beta_max": -1}, {"max_epochs": 0}, {"split_ratio": 1.0}, {"lr_decay": 1.5},
])
def test_invalid_config_values(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(MINI, small_config()))
    assert load_config(path) == (MINI, small_config())


def test_missing_config_key_is_named(tmp_path):
    import yaml

    raw = yaml.safe_load(dump_config(MINI, small_config()))
    del raw["train"]["batch_size"]
    with pytest.raises(ConfigError, match="train.batch_size"):
        parse_config(raw)
    raw = yaml.safe_load(dump_config(MINI, small_config()))
    raw["model"]["colour"] = 3
    with pytest.raises(ConfigError, match="model.colour"):
        parse_config(raw)
    with pytest.raises(ConfigError, match="missing config key: model"):
        parse_config({"train": {}})
    (tmp_path / "bad.yaml").write_text("model: [unclosed")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


# ---- schedules ----


def test_learning_rate_schedule():
    s = Schedules(TrainConfig(max_epochs=6), steps_per_epoch=100)
    assert s.lr_at(0) == 1e-3
    assert s.lr_at(599) == pytest.approx(1e-5, rel=1e-9)
    assert s.lr_at(10_000) == 1e-5
    lrs = [s.lr_at(i) for i in range(700)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert lrs[1] / lrs[0] == pytest.approx(s.lr_decay)
    fixed = Schedules(TrainConfig(lr_decay=0.5), 10)
    assert fixed.lr_at(3) == 1e-3 * 0.125


def test_teacher_forcing_schedule():
    s = Schedules(TrainConfig(max_epochs=6), 10)
    rates = [s.tf_rate_at(e) for e in range(8)]
    assert rates[0] == 0.8
    assert rates[6] == 0.0 and rates[7] == 0.0
    assert all(a > b for a, b in zip(rates[:6], rates[1:7]))


def test_beta_schedule():
    s = Schedules(TrainConfig(beta_max=0.1, beta_warmup_steps=100), 10)
    assert s.beta_at(0) == 0.0
    assert s.beta_at(50) == pytest.approx(0.05)
    assert s.beta_at(100) == 0.1 and s.beta_at(10**6) == 0.1
    assert Schedules(TrainConfig(beta_warmup_steps=0), 10).beta_at(0) == 0.1


def test_max_steps_shortens_horizon():
    s = Schedules(TrainConfig(max_epochs=6, max_steps=50), 100)
    assert s.total_steps == 50
    assert s.lr_at(49) == pytest.approx(1e-5)


# ---- data ----


def test_split_is_song_level_and_deterministic():
    ids = [f"song{i}" for i in range(50)]
    tr, te = split_dataset(ids, 0.9, seed=3)
    assert len(tr) == 45 and len(te) == 5
    assert not set(tr) & set(te) and set(tr) | set(te) == set(ids)
    assert split_dataset(list(reversed(ids)), 0.9, seed=3) == (tr, te)
    assert split_dataset(ids, 0.9, seed=4) != (tr, te)
    with pytest.raises(ValueError):
        split_dataset([], 0.9)
    assert split_dataset(["a", "b"], 0.99) == (["a"], ["b"]) or split_dataset(["a", "b"], 0.99)[1]


def test_augment_covers_all_twelve_keys():
    recs = mini_records(2)
    out = augment(recs)
    assert len(out) == 24 and len(AUGMENT_SHIFTS) == 12
    assert {r.segment_id.split("@")[1] for r in out[:12]} == {f"{k:+d}" for k in range(-6, 6)}
    zero = [r for r in out if r.segment_id.endswith("@+0")]
    assert [r.segment for r in zero] == [r.segment for r in recs]
    assert all(r.song_id == recs[i // 12].song_id for i, r in enumerate(out))


def test_shifted_copy_rotates_pitch_class_histogram():
    rec = mini_records(1)[0]
    out = {r.segment_id.split("@")[1]: r.segment for r in augment([rec])}

    def hist(seg):
        return np.bincount([p % 12 for _, p, _ in seg.notes()], minlength=12)

    assert np.array_equal(hist(out["+1"]), np.roll(hist(out["+0"]), 1))


def test_corpus_index_round_trip(tmp_path):
    idx = CorpusIndex([SongEntry("a", "a.mid", [4, 4], ["a/0000"], "train")], ["train-00000.jsonl"])
    idx.save(tmp_path / "i.json")
    back = CorpusIndex.load(tmp_path / "i.json")
    assert back == idx and back.songs_in("train") == {"a"}


def test_synthetic_corpus_is_deterministic_and_ingests():
    a, b = desk_corpus(2, 4, seed=1), desk_corpus(2, 4, seed=1)
    assert a == b
    for data in a.values():
        segs = from_midi(data)
        assert len(segs) == 2 and all(s.num_notes() > 0 for s in segs)
    notes = desk_song(np.random.default_rng(0), 2)
    assert all(0 <= p < 128 and d >= 1 for _, p, d in notes)


# ---- training loop ----


def test_training_reduces_loss(tmp_path):
    recs = mini_records(8)
    cfg = small_config(max_epochs=150, tf_start=1.0, tf_end=1.0, lr_start=1e-2, lr_end=1e-2, batch_size=8,
                       beta_max=0.0)
    res = train(cfg, MINI, recs)
    first, last = res.history[0]["total"], res.history[-1]["total"]
    assert last < 0.5 * first


def test_metrics_log_and_checkpoints(tmp_path):
    res = train(small_config(), MINI, mini_records(), tmp_path)
    lines = [json.loads(x) for x in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert len(lines) == res.step == 6
    assert {"step", "epoch", "total", "recon_pitch", "recon_duration", "kl", "beta", "lr", "tf", "batch_ids"} <= set(lines[0])
    assert [x["step"] for x in lines] == list(range(6))
    assert sorted(p.name for p in tmp_path.glob("*.pt")) == ["epoch-0001.pt", "epoch-0002.pt", "last.pt"]
    assert lines[0]["tf"] == 0.8 and lines[-1]["tf"] == 0.4


def test_identical_runs_give_identical_logs(tmp_path):
    a = train(small_config(), MINI, mini_records(), tmp_path / "a")
    b = train(small_config(), MINI, mini_records(), tmp_path / "b")
    assert (tmp_path / "a/metrics.jsonl").read_bytes() == (tmp_path / "b/metrics.jsonl").read_bytes()
    for va, vb in zip(a.model.state_dict().values(), b.model.state_dict().values()):
        assert torch.equal(va, vb)
    c = train(small_config(seed=1), MINI, mini_records(), tmp_path / "c")
    assert c.history[0]["total"] != a.history[0]["total"]


def test_resume_continues_monotonically(tmp_path):
    recs = mini_records()
    full = train(small_config(max_epochs=4), MINI, recs, tmp_path / "full")
    train(small_config(max_epochs=2), MINI, recs, tmp_path / "part")
    resumed = train(small_config(max_epochs=4), MINI, recs, tmp_path / "part", resume=True)
    steps = [json.loads(x)["step"] for x in (tmp_path / "part/metrics.jsonl").read_text().splitlines()]
    assert steps == list(range(12)) and resumed.step == 12
    # the learning-rate horizon differs between the 2- and 4-epoch configs, so compare structure only
    assert resumed.history[0]["step"] == 6
    assert full.step == 12


def test_resume_without_checkpoint_fails(tmp_path):
    with pytest.raises(FileNotFoundError):
        train(small_config(), MINI, mini_records(), tmp_path, resume=True)


def test_resume_matches_uninterrupted_run(tmp_path):
    recs = mini_records()
    cfg = small_config(max_epochs=4, lr_decay=0.9)
    full = train(cfg, MINI, recs, tmp_path / "full")
    # stop after two epochs by reading the epoch-2 checkpoint as last.pt
    train(cfg, MINI, recs, tmp_path / "part")
    part = tmp_path / "part"
    (part / "last.pt").write_bytes((part / "epoch-0002.pt").read_bytes())
    lines = (part / "metrics.jsonl").read_text().splitlines()[:6]
    (part / "metrics.jsonl").write_text("\n".join(lines) + "\n")
    resumed = train(cfg, MINI, recs, part, resume=True)
    assert [h["total"] for h in resumed.history] == [h["total"] for h in full.history[6:]]


def test_divergence_names_batch(monkeypatch):
    recs = mini_records(4)
    real = PianoTreeVAE.loss

    def broken(self, *a, **k):
        r = real(self, *a, **k)
        r.total = r.total * float("nan")
        return r

    monkeypatch.setattr(PianoTreeVAE, "loss", broken)
    with pytest.raises(TrainingDiverged) as info:
        train(small_config(), MINI, recs)
    assert info.value.step == 0
    assert set(info.value.batch_ids) <= {r.segment_id for r in recs} and info.value.batch_ids


def test_empty_training_set_is_rejected():
    with pytest.raises(ValueError):
        train(small_config(), MINI, [])


def test_checkpoint_preserves_loss_bitwise(tmp_path):
    recs = mini_records()
    res = train(small_config(), MINI, recs, tmp_path)
    model, _ = load_checkpoint(tmp_path / "last.pt")
    batch = collate([r.segment for r in recs[:4]], MINI.max_simu_notes)
    noise = torch.randn((4, MINI.z_dim), generator=torch.Generator().manual_seed(0))
    a = res.model(batch, beta=0.1, tf_rate=1.0, noise=noise)[0].total
    b = model(batch, beta=0.1, tf_rate=1.0, noise=noise)[0].total
    assert torch.equal(a, b)


def test_augmented_training_uses_twelve_copies():
    recs = mini_records(2)
    res = train(small_config(augment=True, batch_size=8, max_epochs=1), MINI, recs)
    ids = [i for h in res.history for i in h["batch_ids"]]
    assert len(ids) == 24 and len(set(ids)) == 24
    assert math.ceil(24 / 8) == res.step

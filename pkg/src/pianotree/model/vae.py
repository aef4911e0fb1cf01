"""The tree-structured VAE: note -> simu_note -> score encoder and its mirror decoder."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..codec.segment import DURATION_BITS, PolySegment, canonicalize, decode_duration
from .batch import EOS, IGNORE, PITCH_CLASSES, PITCH_INPUTS, SOS, TreeBatch
from .dims import ModelDims

BIT_INPUTS = 3  # soft bit (2) + start flag


@dataclass
class LatentPosterior:
    mu: torch.Tensor
    log_sigma: torch.Tensor

    @property
    def sigma(self) -> torch.Tensor:
        return self.log_sigma.exp()


@dataclass
class DecodeOutput:
    pitch_logits: torch.Tensor  # (B, T, S, 129)
    dur_logits: torch.Tensor  # (B, T, S, 5, 2)
    pitch: torch.Tensor  # (B, T, S) argmax pitch, EOS from the first EOS on
    bits: torch.Tensor  # (B, T, S, 5) argmax duration bits
    counts: torch.Tensor  # (B, T) notes emitted before EOS
    input_pitch: torch.Tensor  # (B, T, S) pitch id fed into each pitch-axis step

    def segments(self, num_steps: int) -> list[PolySegment]:
        pitch = self.pitch.cpu().tolist()
        bits = self.bits.cpu().tolist()
        counts = self.counts.cpu().tolist()
        out = []
        for b in range(len(counts)):
            notes = [
                (t, pitch[b][t][k], decode_duration(bits[b][t][k]))
                for t in range(len(counts[b]))
                for k in range(counts[b][t])
            ]
            out.append(canonicalize(notes, num_steps))
        return out


@dataclass
class LossReport:
    total: torch.Tensor
    recon_pitch: torch.Tensor
    recon_duration: torch.Tensor
    kl: torch.Tensor
    beta: float

    def as_dict(self) -> dict[str, float]:
        names = ("total", "recon_pitch", "recon_duration", "kl")
        out = {k: getattr(self, k).detach().item() for k in names}
        out["beta"] = float(self.beta)
        return out


class NoteEmbedding(nn.Module):
    """Linear map of ``[one_hot(pitch), duration bits]``."""

    def __init__(self, note_dim: int):
        super().__init__()
        self.linear = nn.Linear(PITCH_INPUTS + DURATION_BITS, note_dim)

    def forward(self, pitch: torch.Tensor, bits: torch.Tensor) -> torch.Tensor:
        onehot = F.one_hot(pitch, PITCH_INPUTS).to(self.linear.weight.dtype)
        return self.linear(torch.cat([onehot, bits.to(onehot.dtype)], -1))


class BiGRUSummary(nn.Module):
    """Concatenated final hidden states of a bidirectional GRU."""

    def __init__(self, input_dim: int, hidden: int):
        super().__init__()
        self.gru = nn.GRU(input_dim, hidden, batch_first=True, bidirectional=True)

    def forward(self, x: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        if lengths is not None:
            x = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.gru(x)
        return torch.cat([h[0], h[1]], -1)


def kl_divergence(post: LatentPosterior) -> torch.Tensor:
    """Closed-form KL(N(mu, sigma^2) || N(0, I)) summed over dims, per row."""
    mu, ls = post.mu, post.log_sigma
    return 0.5 * (mu.pow(2) + (2 * ls).exp() - 1 - 2 * ls).sum(-1)


def sample_latent(post: LatentPosterior, noise: torch.Tensor) -> torch.Tensor:
    return post.mu + post.sigma * noise


class PianoTreeVAE(nn.Module):
    def __init__(self, dims: ModelDims | None = None):
        super().__init__()
        self.dims = d = dims or ModelDims()
        # encoder
        self.note_embedding = NoteEmbedding(d.note_dim)
        self.enc_pitch = BiGRUSummary(d.note_dim, d.enc_pitch_hidden)
        self.enc_time = BiGRUSummary(d.simu_note_dim, d.enc_time_hidden)
        self.fc_mu = nn.Linear(d.score_dim, d.z_dim)
        self.fc_log_sigma = nn.Linear(d.score_dim, d.z_dim)
        # decoder
        self.z_to_score = nn.Linear(d.z_dim, d.dec_time_hidden)
        self.sos_simu_note = nn.Parameter(torch.zeros(d.simu_note_dim))
        self.dec_time = nn.GRU(d.simu_note_dim, d.dec_time_hidden, batch_first=True)
        self.time_to_pitch = nn.Linear(d.dec_time_hidden, d.dec_pitch_hidden)
        self.dec_pitch = nn.GRU(d.note_dim, d.dec_pitch_hidden, batch_first=True)
        self.pitch_head = nn.Linear(d.dec_pitch_hidden, PITCH_CLASSES)
        self.dur_init = nn.Linear(d.dec_pitch_hidden + PITCH_CLASSES, d.dec_dur_hidden)
        self.dec_dur = nn.GRUCell(BIT_INPUTS, d.dec_dur_hidden)
        self.dur_head = nn.Linear(d.dec_dur_hidden, 2)

    # ---- encoder ----

    def summarize_onsets(self, tok: torch.Tensor, bits: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """simu_note vectors for ``(..., L)`` per-onset token sequences."""
        lead = tok.shape[:-1]
        L = tok.shape[-1]
        tok = tok.reshape(-1, L)
        bits = bits.reshape(-1, L, DURATION_BITS)
        lengths = lengths.reshape(-1)
        # Every empty onset is the same [SOS, EOS] pair: summarize it once.
        full = torch.nonzero(lengths > 2).squeeze(1)
        empty = self.enc_pitch(self.note_embedding(tok[:1, [0, -1]].new_tensor([[SOS, EOS]]), bits[:1, :2] * 0))
        out = empty.expand(tok.shape[0], -1)
        if len(full):
            emb = self.note_embedding(tok[full], bits[full])
            out = out.index_put((full,), self.enc_pitch(emb, lengths[full]))
        return out.reshape(*lead, -1)

    def encode_batch(self, batch: TreeBatch) -> tuple[LatentPosterior, torch.Tensor]:
        """Posterior and the per-onset simu_note summaries ``(B, T, simu_note_dim)``."""
        tok, bits, lengths = batch.encoder_sequences()
        simu = self.summarize_onsets(tok, bits, lengths)
        score = self.enc_time(simu)
        return LatentPosterior(self.fc_mu(score), self.fc_log_sigma(score)), simu

    # ---- decoder ----

    @staticmethod
    def _cell(gru: nn.GRU, x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        return torch.gru_cell(x, h, gru.weight_ih_l0, gru.weight_hh_l0, gru.bias_ih_l0, gru.bias_hh_l0)

    def _duration_logits(self, h: torch.Tensor, pitch_logit: torch.Tensor) -> torch.Tensor:
        """Five MSB-first bit logits ``(N, 5, 2)``; each bit's softmax feeds the next step."""
        dh = self.dur_init(torch.cat([h, pitch_logit.softmax(-1)], -1))
        bit_in = torch.zeros(h.shape[0], BIT_INPUTS, dtype=h.dtype, device=h.device)
        bit_in[:, 2] = 1
        ys = []
        for _ in range(DURATION_BITS):
            dh = self.dec_dur(bit_in, dh)
            y = self.dur_head(dh)
            ys.append(y)
            bit_in = F.pad(y.softmax(-1), (0, 1))
        return torch.stack(ys, 1)

    def _own_sequences(self, pitch: torch.Tensor, bits: torch.Tensor):
        """``[SOS, notes..., EOS]`` inputs for re-summarizing decoded onsets ``(..., S)``."""
        lead = pitch.shape[:-1]
        sos = torch.full((*lead, 1), SOS, dtype=pitch.dtype, device=pitch.device)
        eos = torch.full((*lead, 1), EOS, dtype=pitch.dtype, device=pitch.device)
        tok = torch.cat([sos, pitch, eos], -1)
        real = pitch != EOS
        pad = torch.zeros((*lead, 1, DURATION_BITS), dtype=bits.dtype, device=bits.device)
        bit_seq = torch.cat([pad, bits * real[..., None], pad], -2)
        counts = real.long().cumprod(-1).sum(-1)
        return tok, bit_seq, counts + 2

    def _sequential(self, z, teacher, tf_rate, generator, teacher_simu):
        """Step-by-step decode; with a teacher it records which inputs were fed."""
        d = self.dims
        B, T = z.shape[0], d.num_steps
        dev, dt = z.device, z.dtype
        h_time = self.z_to_score(z)
        prev_simu = self.sos_simu_note.expand(B, -1)
        sos_ids = torch.full((B,), SOS, dtype=torch.long, device=dev)
        zero_bits = torch.zeros(B, DURATION_BITS, dtype=dt, device=dev)
        sos_note = self.note_embedding(sos_ids, zero_bits)
        width = teacher.max_notes + 1 if teacher is not None else d.max_simu_notes
        t_emb = self.note_embedding(teacher.pitch, teacher.bits) if teacher is not None and tf_rate > 0 else None

        def coin():
            return torch.rand(B, generator=generator, device=dev) < tf_rate

        rec = {name: [] for name in ("logits", "dur", "pitch", "bits", "in_pitch", "in_bits")}
        time_coins = []
        for t in range(T):
            h_time = self._cell(self.dec_time, prev_simu, h_time)
            h = self.time_to_pitch(h_time)
            steps = int(teacher.counts[:, t].max()) + 1 if teacher is not None else d.max_simu_notes
            prev_note, prev_id, prev_bits = sos_note, sos_ids, zero_bits
            finished = torch.zeros(B, dtype=torch.bool, device=dev)
            cols = {name: [] for name in rec}
            for k in range(steps):
                h = self._cell(self.dec_pitch, prev_note, h)
                logit = self.pitch_head(h)
                dlog = self._duration_logits(h, logit)
                p = logit.argmax(-1)
                bits = dlog.argmax(-1)
                for name, v in (("logits", logit), ("dur", dlog), ("in_pitch", prev_id), ("in_bits", prev_bits),
                                ("pitch", torch.where(finished, torch.full_like(p, EOS), p)), ("bits", bits)):
                    cols[name].append(v)
                finished = finished | (p == EOS)
                if k + 1 == steps or (teacher is None and bool(finished.all())):
                    break
                prev_note, prev_id, prev_bits = self.note_embedding(p, bits.to(dt)), p, bits.to(dt)
                if t_emb is not None and k < teacher.max_notes:
                    c = coin() & (k < teacher.counts[:, t])
                    prev_note = torch.where(c[:, None], t_emb[:, t, k], prev_note)
                    prev_id = torch.where(c, teacher.pitch[:, t, k], prev_id)
                    prev_bits = torch.where(c[:, None], teacher.bits[:, t, k].to(dt), prev_bits)
            pad = width - len(cols["pitch"])
            for name, v in cols.items():
                v = torch.stack(v, 1)
                fill = {"pitch": EOS, "in_pitch": IGNORE}.get(name, 0)
                rec[name].append(F.pad(v, (0, 0) * (v.dim() - 2) + (0, pad), value=fill))
            if t + 1 < T:
                use_teacher = coin() if t_emb is not None else torch.zeros(B, dtype=torch.bool, device=dev)
                time_coins.append(use_teacher)
                if bool(use_teacher.all()):
                    prev_simu = teacher_simu[:, t]
                else:
                    own = self.summarize_onsets(*self._own_sequences(rec["pitch"][-1], rec["bits"][-1].to(dt)))
                    prev_simu = own if teacher_simu is None else torch.where(
                        use_teacher[:, None], teacher_simu[:, t], own)
        out = {name: torch.stack(v, 1) for name, v in rec.items()}
        out["time_coins"] = torch.stack(time_coins, 1) if time_coins else torch.zeros(B, 0, dtype=torch.bool)
        return out

    def _parallel(self, z, teacher: TreeBatch, teacher_simu, in_pitch, in_bits, time_coins, own_pitch, own_bits):
        """Teacher-aligned logits given already-decided discrete inputs, in fused calls."""
        d = self.dims
        B, T = z.shape[0], d.num_steps
        dt = z.dtype
        prior = self.sos_simu_note.expand(B, 1, -1)
        if T > 1:
            chosen = teacher_simu[:, :-1] if teacher_simu is not None else None
            if not bool(time_coins.all()):
                own = self.summarize_onsets(*self._own_sequences(own_pitch[:, :-1], own_bits[:, :-1].to(dt)))
                chosen = own if chosen is None else torch.where(time_coins[..., None], chosen, own)
            time_in = torch.cat([prior, chosen], 1)
        else:
            time_in = prior
        h_time, _ = self.dec_time(time_in, self.z_to_score(z)[None])
        h0 = self.time_to_pitch(h_time).reshape(1, B * T, -1)
        S = in_pitch.shape[-1]
        emb = self.note_embedding(in_pitch.clamp_min(0).reshape(B * T, S), in_bits.reshape(B * T, S, -1).to(dt))
        lengths = (teacher.counts + 1).reshape(-1)
        packed = pack_padded_sequence(emb, lengths.cpu(), batch_first=True, enforce_sorted=False)
        hs, _ = self.dec_pitch(packed, h0)
        hs, _ = pad_packed_sequence(hs, batch_first=True, total_length=S)
        hs = hs.reshape(B, T, S, -1)
        logits = self.pitch_head(hs)
        dur = self._duration_logits(hs.reshape(B * T * S, -1), logits.reshape(B * T * S, -1))
        return logits, dur.reshape(B, T, S, DURATION_BITS, 2)

    def decode(
        self,
        z: torch.Tensor,
        teacher: TreeBatch | None = None,
        tf_rate: float = 0.0,
        generator: torch.Generator | None = None,
        teacher_simu: torch.Tensor | None = None,
    ) -> DecodeOutput:
        """Run the time/pitch/duration decoder from ``z``.

        Without a teacher, each onset emits notes until EOS or
        ``max_simu_notes``. With a teacher, every onset runs for the teacher's
        note count plus the EOS step, and each time-axis and pitch-axis input
        is the teacher's with probability ``tf_rate``. Teacher-mode inputs are
        decided by a gradient-free step-by-step pass, then the logits are
        recomputed with fused sequence calls.
        """
        if teacher is None:
            if tf_rate > 0:
                raise ValueError("teacher forcing needs a teacher")
            r = self._sequential(z, None, 0.0, generator, None)
            return self._output(r["logits"], r["dur"], r["pitch"], r["bits"], r["in_pitch"])
        if tf_rate > 0 and teacher_simu is None:
            teacher_simu = self.summarize_onsets(*teacher.encoder_sequences())
        B, T, K = teacher.pitch.shape
        if tf_rate >= 1:
            in_pitch = torch.cat([torch.full((B, T, 1), SOS, dtype=torch.long, device=z.device), teacher.pitch], -1)
            zero = torch.zeros(B, T, 1, DURATION_BITS, dtype=teacher.bits.dtype, device=z.device)
            in_bits = torch.cat([zero, teacher.bits], -2)
            k = torch.arange(K + 1, device=z.device)
            in_pitch = torch.where(k <= teacher.counts[..., None], in_pitch, torch.full_like(in_pitch, IGNORE))
            time_coins = torch.ones(B, max(T - 1, 0), dtype=torch.bool, device=z.device)
            own_pitch = own_bits = None
        else:
            with torch.no_grad():
                r = self._sequential(z, teacher, tf_rate, generator, teacher_simu)
            in_pitch, in_bits, time_coins = r["in_pitch"], r["in_bits"], r["time_coins"]
            own_pitch, own_bits = r["pitch"], r["bits"]
        logits, dur = self._parallel(z, teacher, teacher_simu, in_pitch, in_bits, time_coins, own_pitch, own_bits)
        pitch = logits.argmax(-1)
        first_eos = (pitch == EOS).long().cumsum(-1) > 0
        pitch = pitch.masked_fill(first_eos, EOS)
        return self._output(logits, dur, pitch, dur.argmax(-1), in_pitch)

    @staticmethod
    def _output(logits, dur, pitch, bits, in_pitch) -> DecodeOutput:
        counts = (pitch != EOS).long().cumprod(-1).sum(-1)
        return DecodeOutput(logits, dur, pitch, bits, counts, in_pitch)

    # ---- objective ----

    def loss(self, out: DecodeOutput, target: TreeBatch, post: LatentPosterior, beta: float) -> LossReport:
        """Negative ELBO with sum-over-tokens, mean-over-batch reduction."""
        p_tgt = target.pitch_target()
        d_tgt = target.dur_target()
        if out.pitch_logits.shape[:3] != p_tgt.shape:
            raise ValueError(
                f"logits cover {tuple(out.pitch_logits.shape[:3])} positions, target has {tuple(p_tgt.shape)}")
        B = p_tgt.shape[0]
        recon_pitch = F.cross_entropy(
            out.pitch_logits.reshape(-1, PITCH_CLASSES), p_tgt.reshape(-1), ignore_index=IGNORE, reduction="sum") / B
        recon_dur = F.cross_entropy(
            out.dur_logits.reshape(-1, 2), d_tgt.reshape(-1), ignore_index=IGNORE, reduction="sum") / B
        kl = kl_divergence(post).mean()
        total = recon_pitch + recon_dur + beta * kl
        return LossReport(total, recon_pitch, recon_dur, kl, beta)

    def forward(
        self,
        batch: TreeBatch,
        beta: float,
        tf_rate: float = 1.0,
        generator: torch.Generator | None = None,
        noise: torch.Tensor | None = None,
    ) -> tuple[LossReport, DecodeOutput, LatentPosterior]:
        post, simu = self.encode_batch(batch)
        if noise is None:
            noise = torch.randn(post.mu.shape, generator=generator, device=post.mu.device, dtype=post.mu.dtype)
        z = sample_latent(post, noise)
        out = self.decode(z, teacher=batch, tf_rate=tf_rate, generator=generator, teacher_simu=simu)
        return self.loss(out, batch, post, beta), out, post

"""Expands curated enrollment segments into a detector training set.

Positives: the curated segments, time-shifted re-crops of the audio,
and delta-encoder deformations in embedding space.  Negatives: masked
or block-shuffled copies of target embedding sequences.  Nothing here
ever reads non-target audio.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp, nn
from .errors import (
    EmptyInputError,
    FormatError,
    SeqshotError,
    ShapeError,
    TruncatedFileError,
    VersionMismatchError,
)

EMBED_HOP_S = 0.32

PROVENANCES = ("curated", "time_shift", "delta", "masked", "shuffled")

ENLARGE_S = 0.5          # curation bounds grow by this much, split evenly
MIN_CROP_S = 1.4         # shortest audio crop that embeds to >= 4 frames
                         # (enough for the masking/shuffling synthesizers)
MASK_FRACTION = (0.25, 0.5)
SHUFFLE_BLOCK_DIVISOR = 5


def _padded_sample_bounds(shot, onset_s, offset_s):
    """Sample bounds for [onset, offset), widened symmetrically to at
    least MIN_CROP_S and clipped to the shot."""
    sr = shot.sample_rate
    a = int(round(onset_s * sr))
    b = int(round(offset_s * sr))
    need = int(MIN_CROP_S * sr)
    if b - a < need:
        mid = (a + b) // 2
        a = max(0, mid - need // 2)
        b = a + need
        if b > len(shot.samples):
            b = len(shot.samples)
            a = max(0, b - need)
    return a, b


@dataclass
class EmbeddingSequence:
    frames: np.ndarray            # (T, E)
    label: int                    # 1 target, 0 nontarget
    provenance: str
    frame_hop_s: float = EMBED_HOP_S

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 2:
            raise ShapeError("embedding sequence needs >= 2 frames")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("non-finite embedding frames")


# -- time-domain positive augmentation ----------------------------------------

def time_shift_augment(shot: dsp.Waveform, segment, n, rng, embed_fn):
    """Re-crop the curated segment within bounds enlarged by 250 ms per
    side and embed each crop; all outputs share one frame count."""
    sr = shot.sample_rate
    dur = segment.offset_s - segment.onset_s
    if dur > shot.duration_s + 1e-9:
        raise SeqshotError("segment longer than its shot")
    dur = max(dur, min(MIN_CROP_S, shot.duration_s))
    lo = max(0.0, segment.onset_s - ENLARGE_S / 2)
    hi = min(shot.duration_s, segment.onset_s + dur + ENLARGE_S / 2)
    max_start = max(lo, hi - dur)
    n_samples = int(round(dur * sr))
    out = []
    for _ in range(n):
        start = float(rng.uniform(lo, max_start)) if max_start > lo else lo
        a = int(round(start * sr))
        a = min(a, len(shot.samples) - n_samples)
        crop = dsp.Waveform(shot.samples[a: a + n_samples], sr)
        out.append(EmbeddingSequence(embed_fn(crop), label=1,
                                     provenance="time_shift"))
    return out


# -- delta encoder ---------------------------------------------------------------

@dataclass
class DeltaConfig:
    z_dim: int = 16
    hidden: int = 128
    epochs: int = 300
    lr: float = 1e-3
    weight_decay: float = 0.0
    holdout_frac: float = 0.2
    batch_size: int = 256
    seed: int = 0


class DeltaEncoder:
    """Encoder-decoder over embedding frames: a low-dim deformation code z
    extracted from a (clean, degraded) frame pair is applied to new frames."""

    KIND = "delta"

    def __init__(self, embed_dim, config: DeltaConfig = None):
        self.embed_dim = embed_dim
        self.config = config or DeltaConfig()
        rng = np.random.default_rng(self.config.seed + 77)
        e, z, h = embed_dim, self.config.z_dim, self.config.hidden
        self.encoder = nn.Graph([
            nn.Linear(2 * e, h, "enc1", rng),
            nn.ReLU("enc_relu"),
            nn.Linear(h, z, "enc2", rng),
        ])
        self.decoder = nn.Graph([
            nn.Linear(e + z, h, "dec1", rng),
            nn.ReLU("dec_relu"),
            nn.Linear(h, e, "dec2", rng),
        ])
        self.holdout_l1 = None

    def encode(self, clean, degraded):
        return self.encoder.forward(np.hstack([clean, degraded]))[0]

    def decode(self, base, z):
        return self.decoder.forward(np.hstack([base, z]))[0]

    def apply(self, base, clean, degraded):
        return self.decode(base, self.encode(clean, degraded))

    def params(self):
        return {**{f"encoder/{k}": v for k, v in self.encoder.params().items()},
                **{f"decoder/{k}": v for k, v in self.decoder.params().items()}}

    def grads(self):
        return {**{f"encoder/{k}": v for k, v in self.encoder.grads().items()},
                **{f"decoder/{k}": v for k, v in self.decoder.grads().items()}}

    def zero_grads(self):
        self.encoder.zero_grads()
        self.decoder.zero_grads()

    def mark_updated(self):
        self.encoder.mark_updated()
        self.decoder.mark_updated()

    def save(self, path):
        meta = {"meta/embed_dim": np.array([self.embed_dim], dtype=np.float64),
                "meta/z_dim": np.array([self.config.z_dim], dtype=np.float64),
                "meta/hidden": np.array([self.config.hidden], dtype=np.float64)}
        nn.write_checkpoint(path, self.KIND, {**self.params(), **meta})

    @classmethod
    def load(cls, path):
        kind, tensors = nn.read_checkpoint(path)
        if kind != cls.KIND:
            raise FormatError(f"checkpoint kind {kind!r}, expected {cls.KIND!r}")
        cfg = DeltaConfig(z_dim=int(tensors["meta/z_dim"][0]),
                          hidden=int(tensors["meta/hidden"][0]))
        model = cls(int(tensors["meta/embed_dim"][0]), cfg)
        params = model.params()
        for k, v in tensors.items():
            if not k.startswith("meta/"):
                params[k][...] = v
        model.mark_updated()
        return model


def train_delta(pairs, config: DeltaConfig = None):
    """Train from time-aligned (clean, degraded) embedding sequences.

    Per frame: z = Enc(clean || degraded), reconstruction
    Dec(clean || z) ~ degraded, L1 loss.  Returns the model with its
    held-out L1 recorded in ``holdout_l1``.
    """
    cfg = config or DeltaConfig()
    if not pairs:
        raise EmptyInputError("no training pairs")
    # the code z comes from frame t but is applied to a different frame
    # t+1 of the same pair, so z cannot smuggle frame content through
    clean_rows, deg_rows, base_rows, tgt_rows = [], [], [], []
    for c, d in pairs:
        cf = c.frames if isinstance(c, EmbeddingSequence) else np.asarray(c)
        df = d.frames if isinstance(d, EmbeddingSequence) else np.asarray(d)
        if cf.shape != df.shape:
            raise ShapeError(f"pair length mismatch: {cf.shape} vs {df.shape}")
        clean_rows.append(cf)
        deg_rows.append(df)
        base_rows.append(np.roll(cf, -1, axis=0))
        tgt_rows.append(np.roll(df, -1, axis=0))
    clean = np.vstack(clean_rows)
    deg = np.vstack(deg_rows)
    base = np.vstack(base_rows)
    tgt = np.vstack(tgt_rows)
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(clean))
    n_hold = max(1, int(cfg.holdout_frac * len(clean)))
    hold, train = perm[:n_hold], perm[n_hold:]
    if len(train) == 0:
        train = hold
    model = DeltaEncoder(clean.shape[1], cfg)
    params = model.params()
    state = nn.adamw_init(params)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train))
        for b0 in range(0, len(order), cfg.batch_size):
            idx = train[order[b0: b0 + cfg.batch_size]]
            enc_in = np.hstack([clean[idx], deg[idx]])
            z, enc_cache = model.encoder.forward(enc_in)
            dec_in = np.hstack([base[idx], z])
            recon, dec_cache = model.decoder.forward(dec_in)
            resid = recon - tgt[idx]
            d_recon = np.sign(resid) / resid.size
            model.zero_grads()
            d_dec_in = model.decoder.backward(dec_cache, d_recon).dx
            dz = d_dec_in[:, clean.shape[1]:]
            model.encoder.backward(enc_cache, dz)
            nn.adamw_step(params, model.grads(), state, cfg.lr,
                          cfg.weight_decay)
            model.mark_updated()
    recon_hold = model.apply(base[hold], clean[hold], deg[hold])
    model.holdout_l1 = float(np.mean(np.abs(recon_hold - tgt[hold])))
    model.holdout_identity_l1 = float(np.mean(np.abs(base[hold] - tgt[hold])))
    return model


def delta_augment(model: DeltaEncoder, target: EmbeddingSequence, donor_pair,
                  n, rng):
    """Apply donor deformations to the target sequence, n variants.

    Per variant a random donor start offset is drawn; donor frames pair
    with target frames by index modulo donor length.  Output keeps the
    target's frame count and stays a positive.
    """
    clean, deg = donor_pair
    cf = clean.frames if isinstance(clean, EmbeddingSequence) else np.asarray(clean)
    df = deg.frames if isinstance(deg, EmbeddingSequence) else np.asarray(deg)
    if cf.shape != df.shape:
        raise ShapeError("donor pair not time-aligned")
    t = target.frames.shape[0]
    td = cf.shape[0]
    out = []
    for _ in range(n):
        off = int(rng.integers(0, td))
        idx = (np.arange(t) + off) % td
        frames = model.apply(target.frames, cf[idx], df[idx])
        out.append(EmbeddingSequence(frames, label=1, provenance="delta"))
    return out


# -- negative synthesis ------------------------------------------------------------

def synth_negative_mask(target: EmbeddingSequence, rng, rho=None):
    """Replace a contiguous block (25-50 % of T) with the mean frame."""
    t = target.frames.shape[0]
    if t < 4:
        raise EmptyInputError("need >= 4 frames to mask")
    if rho is None:
        rho = float(rng.uniform(*MASK_FRACTION))
    length = max(1, int(round(rho * t)))
    start = int(rng.integers(0, t - length + 1))
    frames = target.frames.copy()
    frames[start: start + length] = target.frames.mean(axis=0)
    return EmbeddingSequence(frames, label=0, provenance="masked")


def synth_negative_shuffle(target: EmbeddingSequence, rng):
    """Permute blocks (about T/5 of them, min 2) with a non-identity
    permutation; preserves the frame multiset exactly."""
    t = target.frames.shape[0]
    if t < 4:
        raise EmptyInputError("need >= 4 frames to shuffle")
    n_blocks = max(2, int(round(t / SHUFFLE_BLOCK_DIVISOR)))
    base = t // n_blocks
    bounds = [(i * base, (i + 1) * base if i < n_blocks - 1 else t)
              for i in range(n_blocks)]
    while True:
        perm = rng.permutation(n_blocks)
        if np.any(perm != np.arange(n_blocks)):
            break
    frames = np.vstack([target.frames[bounds[j][0]: bounds[j][1]]
                        for j in perm])
    return EmbeddingSequence(frames, label=0, provenance="shuffled")


# -- training-set assembly -----------------------------------------------------------

@dataclass
class AugmentConfig:
    n_time_shift: int = 8
    n_delta: int = 8
    n_masked: int = 8
    n_shuffled: int = 8


def build_train_set(shots, segments, embed_fn, delta_model, donor_pairs,
                    config: AugmentConfig, rng):
    """D_train from curated segments only: positives (curated, shifted,
    delta) and synthesized negatives (masked, shuffled)."""
    if not segments:
        raise EmptyInputError("no curated segments")
    out = []
    for shot, seg in zip(shots, segments):
        sr = shot.sample_rate
        a, b = _padded_sample_bounds(shot, seg.onset_s, seg.offset_s)
        curated = EmbeddingSequence(
            embed_fn(dsp.Waveform(shot.samples[a:b], sr)),
            label=1, provenance="curated",
        )
        out.append(curated)
        out.extend(time_shift_augment(shot, seg, config.n_time_shift, rng,
                                      embed_fn))
        if config.n_delta > 0:
            donor = donor_pairs[int(rng.integers(0, len(donor_pairs)))]
            out.extend(delta_augment(delta_model, curated, donor,
                                     config.n_delta, rng))
        for _ in range(config.n_masked):
            out.append(synth_negative_mask(curated, rng))
        for _ in range(config.n_shuffled):
            out.append(synth_negative_shuffle(curated, rng))
    return out


# -- serialization ----------------------------------------------------------------------

SEQ_MAGIC = b"SQES"
SEQ_VERSION = 1


def write_embedding_sequence(path, seq: EmbeddingSequence):
    frames = np.ascontiguousarray(seq.frames, dtype="<f4")
    with open(path, "wb") as f:
        f.write(SEQ_MAGIC)
        f.write(struct.pack("<III", SEQ_VERSION, frames.shape[0],
                            frames.shape[1]))
        f.write(frames.tobytes())
        f.write(struct.pack("<BB", seq.label,
                            PROVENANCES.index(seq.provenance)))


def read_embedding_sequence(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SEQ_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        head = f.read(12)
        if len(head) != 12:
            raise TruncatedFileError("sequence header truncated")
        version, t, e = struct.unpack("<III", head)
        if version != SEQ_VERSION:
            raise VersionMismatchError(f"sequence version {version}")
        raw = f.read(4 * t * e + 2)
        if len(raw) != 4 * t * e + 2:
            raise TruncatedFileError("sequence payload truncated")
    frames = np.frombuffer(raw[:-2], dtype="<f4").reshape(t, e)
    label, prov = raw[-2], raw[-1]
    return EmbeddingSequence(frames.astype(np.float64), label=int(label),
                             provenance=PROVENANCES[prov])


def save_train_set(directory, seqs):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(seqs):
        name = f"seq_{i:05d}.sqes"
        write_embedding_sequence(directory / name, s)
        entries.append({"file": name, "label": s.label,
                        "provenance": s.provenance})
    with open(directory / "manifest.json", "w") as f:
        json.dump(entries, f, indent=1, sort_keys=True)


def load_train_set(directory):
    directory = Path(directory)
    entries = json.loads((directory / "manifest.json").read_text())
    return [read_embedding_sequence(directory / e["file"]) for e in entries]

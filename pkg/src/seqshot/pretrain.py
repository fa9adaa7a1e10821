"""Embedding pretraining: weak-label classifier, distilled student,
pseudo-strong labeling, and the frame-level (strong) embedding.

Architectures are desk-scale conv stacks that keep the pooling
topologies that matter:

  WeakModel    conv2d stack -> channel-wise global pool -> 2-layer FC head
               (one logit vector per clip, any duration >= 0.5 s)
  StrongModel  same conv stack -> frequency-only pooling -> 1x1 conv neck
               -> 1x1 conv classifier (one logit vector per 320 ms)

The conv stack halves the time axis five times with non-overlapping
kernels, so one output frame covers exactly 32 logmel frames (320 ms)
and floor(T/32) frames come out.
"""

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dsp, nn
from .errors import (
    EmptyInputError,
    FormatError,
    SeqshotError,
    TruncatedFileError,
    VersionMismatchError,
)

FRAMES_PER_EMBED = 32            # logmel frames per strong-embedding frame
EMBED_HOP_S = FRAMES_PER_EMBED * dsp.FRAME_HOP_S   # 0.32

PSEUDO_WIN_S = 0.5
PSEUDO_HOP_S = 0.1
PSEUDO_THRESHOLD = 0.5


# -- data ---------------------------------------------------------------------

@dataclass
class ClipRecord:
    wav_path: Path = None
    labels: tuple = ()
    events: tuple = ()
    _waveform: object = None

    def load(self):
        if self._waveform is None:
            self._waveform = dsp.load_wav(self.wav_path)
        return self._waveform


def load_manifest(path):
    """Read a JSON-lines dataset manifest; wav paths resolve relative to it."""
    path = Path(path)
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        records.append(ClipRecord(
            wav_path=path.parent / r["wav"],
            labels=tuple(r["labels"]),
            events=tuple(tuple(e) for e in r.get("events", ())),
        ))
    return records


def multi_hot(labels, n_classes):
    v = np.zeros(n_classes)
    for c in labels:
        v[c] = 1.0
    return v


# -- losses ---------------------------------------------------------------------

def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def bce_with_logits(logits, targets):
    """Mean binary cross entropy; returns (loss, dloss/dlogits)."""
    z = logits
    # stable: log(1+e^z) = max(z,0) + log1p(e^{-|z|})
    loss = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    return float(loss.sum() / n), (sigmoid(z) - targets) / n


def kd_binary_kl(teacher_logits, student_logits, temperature):
    """Per-class binary KL(sigma(t/T) || sigma(s/T)) * T^2, averaged.

    Returns (loss, dloss/dstudent_logits).
    """
    tau = temperature
    p = sigmoid(teacher_logits / tau)
    q = sigmoid(student_logits / tau)
    eps = 1e-12
    kl = p * (np.log(p + eps) - np.log(q + eps)) \
        + (1 - p) * (np.log(1 - p + eps) - np.log(1 - q + eps))
    n = teacher_logits.size
    loss = float(tau * tau * kl.sum() / n)
    dstudent = tau * (q - p) / n
    return loss, dstudent


# -- models -----------------------------------------------------------------------

@dataclass
class ModelConfig:
    n_classes: int
    channels: tuple = (16, 32, 48, 64, 128)
    head_hidden: int = 128
    embed_dim: int = 64          # strong-embedding dim (1x1 neck output)
    seed: int = 0
    # Backbone stage whose output provides the embedding frames: the
    # frequency axis is flattened, not pooled, so the spectral detail
    # that separates same-vocabulary sequences survives.  None taps the
    # pre-classifier neck (fully frequency-pooled) instead.
    embed_tap: int = 3

    @property
    def pooled_dim(self):
        return self.channels[-1]


def _backbone_layers(cfg, rng):
    layers = []
    c_prev = 1
    for i, c in enumerate(cfg.channels):
        layers.append(nn.Conv2d(c_prev, c, kernel=(2, 3), name=f"conv{i}",
                                rng=rng, stride=(2, 2), pad=(0, 1)))
        layers.append(nn.ReLU(f"relu{i}"))
        c_prev = c
    return layers


def _config_meta(cfg):
    return {
        "meta/n_classes": np.array([cfg.n_classes], dtype=np.float64),
        "meta/channels": np.array(cfg.channels, dtype=np.float64),
        "meta/head_hidden": np.array([cfg.head_hidden], dtype=np.float64),
        "meta/embed_dim": np.array([cfg.embed_dim], dtype=np.float64),
        "meta/embed_tap": np.array(
            [-1 if cfg.embed_tap is None else cfg.embed_tap],
            dtype=np.float64),
    }


def _config_from_meta(extra):
    tap_arr = extra.get("meta/embed_tap")
    tap = ModelConfig.embed_tap if tap_arr is None else int(tap_arr[0])
    return ModelConfig(
        n_classes=int(extra["meta/n_classes"][0]),
        channels=tuple(int(c) for c in extra["meta/channels"]),
        head_hidden=int(extra["meta/head_hidden"][0]),
        embed_dim=int(extra["meta/embed_dim"][0]),
        embed_tap=None if tap < 0 else tap,
    )


class WeakModel:
    """Weak-label multi-label classifier with a pooled embedding."""

    KIND = "weak"

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.backbone = nn.Graph(
            _backbone_layers(config, rng) + [nn.GlobalChannelPool("pool")]
        )
        self.head = nn.Graph([
            nn.Linear(config.pooled_dim, config.head_hidden, "fc1", rng),
            nn.ReLU("fc_relu"),
            nn.Linear(config.head_hidden, config.n_classes, "fc2", rng),
        ])

    def forward(self, x):
        """x: (B, 1, T, 64) logmel batch -> (logits, cache)."""
        emb, c1 = self.backbone.forward(x)
        logits, c2 = self.head.forward(emb)
        return logits, (c1, c2)

    def backward(self, cache, dlogits):
        c1, c2 = cache
        demb = self.head.backward(c2, dlogits).dx
        return self.backbone.backward(c1, demb).dx

    def logits(self, x):
        return self.forward(x)[0]

    def embed(self, x):
        return self.backbone.forward(x)[0]

    def params(self):
        return {**{f"backbone/{k}": v for k, v in self.backbone.params().items()},
                **{f"head/{k}": v for k, v in self.head.params().items()}}

    def grads(self):
        return {**{f"backbone/{k}": v for k, v in self.backbone.grads().items()},
                **{f"head/{k}": v for k, v in self.head.grads().items()}}

    def zero_grads(self):
        self.backbone.zero_grads()
        self.head.zero_grads()

    def mark_updated(self):
        self.backbone.mark_updated()
        self.head.mark_updated()

    def save(self, path):
        nn.write_checkpoint(path, self.KIND,
                            {**self.params(), **_config_meta(self.config)})

    @classmethod
    def load(cls, path):
        kind, tensors = nn.read_checkpoint(path)
        if kind != cls.KIND:
            raise FormatError(f"checkpoint kind {kind!r}, expected {cls.KIND!r}")
        extra = {k: v for k, v in tensors.items() if k.startswith("meta/")}
        model = cls(_config_from_meta(extra))
        params = model.params()
        for k, v in tensors.items():
            if k.startswith("meta/"):
                continue
            params[k][...] = v
        model.mark_updated()
        return model


class StrongModel:
    """Frame-level embedding/classifier; one output frame per 320 ms."""

    KIND = "strong"

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed + 1)
        self.backbone = nn.Graph(
            _backbone_layers(config, rng) + [nn.MeanOverFreq("fpool")]
        )
        self.neck = nn.Graph([
            nn.Conv1d(config.pooled_dim, config.embed_dim, kernel=1,
                      name="neck", rng=rng),
            nn.ReLU("neck_relu"),
        ])
        self.classifier = nn.Graph([
            nn.Conv1d(config.embed_dim, config.n_classes, kernel=1,
                      name="cls", rng=rng),
        ])

    def forward(self, x):
        """x: (B, 1, T, 64) -> (logits (B, C, T//32), cache)."""
        h, c1 = self.backbone.forward(x)
        feats, c2 = self.neck.forward(h)
        logits, c3 = self.classifier.forward(feats)
        return logits, (c1, c2, c3)

    def backward(self, cache, dlogits):
        c1, c2, c3 = cache
        dfeat = self.classifier.backward(c3, dlogits).dx
        dh = self.neck.backward(c2, dfeat).dx
        return self.backbone.backward(c1, dh).dx

    def features(self, x):
        """Pre-classifier embedding frames: (B, embed_dim, T//32)."""
        h, _ = self.backbone.forward(x)
        return self.neck.forward(h)[0]

    def params(self):
        out = {}
        for prefix, g in (("backbone", self.backbone), ("neck", self.neck),
                          ("classifier", self.classifier)):
            out.update({f"{prefix}/{k}": v for k, v in g.params().items()})
        return out

    def grads(self):
        out = {}
        for prefix, g in (("backbone", self.backbone), ("neck", self.neck),
                          ("classifier", self.classifier)):
            out.update({f"{prefix}/{k}": v for k, v in g.grads().items()})
        return out

    def zero_grads(self):
        for g in (self.backbone, self.neck, self.classifier):
            g.zero_grads()

    def mark_updated(self):
        for g in (self.backbone, self.neck, self.classifier):
            g.mark_updated()

    def init_backbone_from(self, weak: WeakModel):
        """Copy the (distilled) student's convolutional weights."""
        src = weak.backbone.params()
        dst = self.backbone.params()
        for k, v in dst.items():
            if k in src:
                v[...] = src[k]
        self.backbone.mark_updated()

    def save(self, path):
        nn.write_checkpoint(path, self.KIND,
                            {**self.params(), **_config_meta(self.config)})

    @classmethod
    def load(cls, path):
        kind, tensors = nn.read_checkpoint(path)
        if kind != cls.KIND:
            raise FormatError(f"checkpoint kind {kind!r}, expected {cls.KIND!r}")
        extra = {k: v for k, v in tensors.items() if k.startswith("meta/")}
        model = cls(_config_from_meta(extra))
        params = model.params()
        for k, v in tensors.items():
            if k.startswith("meta/"):
                continue
            params[k][...] = v
        model.mark_updated()
        return model


# -- training -------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    peak_lr: float = 0.01
    final_lr: float = 0.0001
    warmup_frac: float = 0.1
    weight_decay: float = 1e-4
    crop_frames: int = 998
    augment: bool = True
    spec_time_masks: int = 2
    spec_freq_masks: int = 2
    spec_max_t: int = 20
    spec_max_f: int = 8


def _class_weights(records, n_classes):
    """Per-clip sampling weight, proportional to 1/sqrt(class frequency)
    of the clip's rarest class."""
    counts = np.zeros(n_classes)
    for r in records:
        for c in r.labels:
            counts[c] += 1
    counts = np.maximum(counts, 1.0)
    w = np.array([max(1.0 / np.sqrt(counts[c]) for c in r.labels)
                  if r.labels else min(1.0 / np.sqrt(counts))
                  for r in records])
    return w / w.sum()


def _augment_clip(w, rng, cfg):
    """Resample/gain in the signal domain; returns (waveform, rate_factor)."""
    rate = float(rng.uniform(0.9, 1.1))
    gain = float(rng.uniform(-20.0, 20.0))
    out = dsp.augment_resample(w, rate)
    out = dsp.augment_gain(out, gain)
    return out, rate


def _fix_frames(m, n_frames, rng, random_crop=True):
    """Crop or floor-pad a logmel to exactly n_frames; returns
    (matrix, crop_offset_frames, valid_frames)."""
    t = m.shape[0]
    if t >= n_frames:
        off = int(rng.integers(0, t - n_frames + 1)) if random_crop else 0
        return m[off: off + n_frames], off, n_frames
    pad = np.full((n_frames - t, m.shape[1]), np.log(dsp.LOG_FLOOR))
    return np.vstack([m, pad]), 0, t


def _prepare_batch(records, idxs, n_classes, rng, cfg, random_crop=True):
    """Load + augment a batch; returns (x (B,1,T,64), targets, meta).

    meta holds (record_idx, rate, crop_off, valid_frames, mix_partner, lam)
    for per-frame label mapping in strong training.
    """
    feats, targs, meta = [], [], []
    for i in idxs:
        r = records[i]
        w = r.load()
        rate, off, valid = 1.0, 0, cfg.crop_frames
        if cfg.augment:
            w, rate = _augment_clip(w, rng, cfg)
        m = dsp.logmel(w)
        m, off, valid = _fix_frames(m, cfg.crop_frames, rng, random_crop)
        if cfg.augment:
            m = dsp.spec_augment(m, rng, cfg.spec_time_masks,
                                 cfg.spec_freq_masks, cfg.spec_max_t,
                                 cfg.spec_max_f)
        feats.append(m)
        targs.append(multi_hot(r.labels, n_classes))
        meta.append({"idx": int(i), "rate": rate, "off": off, "valid": valid,
                     "partner": None, "lam": 1.0})
    # mixup within the batch
    if cfg.augment and len(idxs) > 1:
        perm = rng.permutation(len(idxs))
        lams = [dsp.draw_mixup_lambda(rng) for _ in idxs]
        mixed_f, mixed_t = [], []
        for k, (j, lam) in enumerate(zip(perm, lams)):
            f, t = dsp.mixup(feats[k], feats[j], targs[k], targs[j], lam)
            mixed_f.append(f)
            mixed_t.append(t)
            meta[k]["partner"] = int(j)
            meta[k]["lam"] = lam
        feats, targs = mixed_f, mixed_t
    x = np.stack(feats)[:, None, :, :]
    return x, np.stack(targs), meta


def train_weak(records, n_classes, config: TrainConfig,
               model_config: ModelConfig = None, teacher=None,
               temperature=2.0, kd_weight=0.5):
    """Train the weak-label multi-label classifier.

    With ``teacher`` set this is distillation: the loss becomes
    kd_weight * tau^2 * KL(sigma(t/tau) || sigma(s/tau)) per class plus
    (1 - kd_weight) * BCE(labels).
    """
    if not records:
        raise EmptyInputError("empty dataset")
    for r in records:
        if any(c >= n_classes for c in r.labels):
            raise SeqshotError("label id exceeds n_classes")
    if model_config is None:
        model_config = ModelConfig(n_classes=n_classes, seed=config.seed)
    if model_config.n_classes != n_classes:
        raise SeqshotError("model/dataset class count mismatch")
    if teacher is not None and teacher.config.n_classes != n_classes:
        raise SeqshotError("teacher class count mismatch")
    model = WeakModel(model_config)
    rng = np.random.default_rng(config.seed)
    weights = _class_weights(records, n_classes)
    steps_per_epoch = max(1, (len(records) + config.batch_size - 1)
                          // config.batch_size)
    total_steps = max(1, config.epochs * steps_per_epoch)
    params = model.params()
    state = nn.adamw_init(params)
    step = 0
    loss_curve = []
    for _ in range(config.epochs):
        epoch_loss = 0.0
        for _ in range(steps_per_epoch):
            idxs = rng.choice(len(records), size=min(config.batch_size,
                                                     len(records)),
                              replace=True, p=weights)
            x, y, _ = _prepare_batch(records, idxs, n_classes, rng, config)
            logits, cache = model.forward(x)
            if teacher is None:
                loss, dlogits = bce_with_logits(logits, y)
            else:
                t_logits, _ = teacher.forward(x)
                kd, d_kd = kd_binary_kl(t_logits, logits, temperature)
                bce, d_bce = bce_with_logits(logits, y)
                loss = kd_weight * kd + (1 - kd_weight) * bce
                dlogits = kd_weight * d_kd + (1 - kd_weight) * d_bce
            model.zero_grads()
            model.backward(cache, dlogits)
            lr = nn.one_cycle_lr(step, total_steps, config.peak_lr,
                                 config.final_lr, config.warmup_frac)
            nn.adamw_step(params, model.grads(), state, lr,
                          config.weight_decay)
            model.mark_updated()
            epoch_loss += loss
            step += 1
        loss_curve.append(epoch_loss / steps_per_epoch)
    model.loss_curve = loss_curve
    return model


def distill(teacher, student_config: ModelConfig, records, config: TrainConfig,
            temperature=2.0, kd_weight=0.5):
    """Train a student against teacher logits + ground-truth labels."""
    return train_weak(records, teacher.config.n_classes, config,
                      model_config=student_config, teacher=teacher,
                      temperature=temperature, kd_weight=kd_weight)


# -- pseudo-strong labels -----------------------------------------------------------

@dataclass
class PseudoStrongLabels:
    labels: np.ndarray            # (windows, classes) uint8
    window_hop_s: float = PSEUDO_HOP_S
    window_len_s: float = PSEUDO_WIN_S
    threshold: float = PSEUDO_THRESHOLD


def pseudo_window_count(duration_s):
    return int(np.floor((duration_s - PSEUDO_WIN_S) / PSEUDO_HOP_S + 1e-9)) + 1


def pseudo_label(model: WeakModel, w: dsp.Waveform, batch_size=128):
    """Sigmoid predictions per 0.5 s window at 0.1 s hops, thresholded
    strictly above 0.5."""
    win = int(PSEUDO_WIN_S * dsp.SAMPLE_RATE)
    hop = int(PSEUDO_HOP_S * dsp.SAMPLE_RATE)
    if len(w.samples) < win:
        raise EmptyInputError("clip shorter than one 0.5 s window")
    n_win = (len(w.samples) - win) // hop + 1
    m = dsp.logmel(w)
    frames_per_win = 1 + (win - dsp.FRAME_LEN) // dsp.FRAME_HOP   # 48
    hop_frames = hop // dsp.FRAME_HOP                             # 10
    out = np.zeros((n_win, model.config.n_classes), dtype=np.uint8)
    for b0 in range(0, n_win, batch_size):
        ids = range(b0, min(b0 + batch_size, n_win))
        x = np.stack([m[j * hop_frames: j * hop_frames + frames_per_win]
                      for j in ids])[:, None, :, :]
        probs = sigmoid(model.logits(x))
        out[b0: b0 + x.shape[0]] = (probs > PSEUDO_THRESHOLD).astype(np.uint8)
    return PseudoStrongLabels(labels=out)


PSEUDO_MAGIC = b"SQPL"
PSEUDO_VERSION = 1


def write_pseudo_labels(path, psl: PseudoStrongLabels):
    packed = np.packbits(psl.labels.reshape(-1))
    with open(path, "wb") as f:
        f.write(PSEUDO_MAGIC)
        f.write(struct.pack("<III", PSEUDO_VERSION, psl.labels.shape[0],
                            psl.labels.shape[1]))
        f.write(packed.tobytes())


def read_pseudo_labels(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != PSEUDO_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        head = f.read(12)
        if len(head) != 12:
            raise TruncatedFileError("pseudo-label header truncated")
        version, n_win, n_cls = struct.unpack("<III", head)
        if version != PSEUDO_VERSION:
            raise VersionMismatchError(f"pseudo-label version {version}")
        need = (n_win * n_cls + 7) // 8
        raw = f.read(need)
        if len(raw) != need:
            raise TruncatedFileError("pseudo-label payload truncated")
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: n_win * n_cls]
    return PseudoStrongLabels(labels=bits.reshape(n_win, n_cls))


# -- strong training ------------------------------------------------------------------

def _frame_targets(psl: PseudoStrongLabels, n_out, rate, crop_off, valid):
    """Per-output-frame target: the pseudo window whose center is nearest
    the 320 ms frame center, mapped back through resample/crop."""
    n_win, n_cls = psl.labels.shape
    targets = np.zeros((n_out, n_cls))
    for f in range(n_out):
        center_aug = (crop_off + (f + 0.5) * FRAMES_PER_EMBED) * dsp.FRAME_HOP_S
        if (f + 1) * FRAMES_PER_EMBED > valid:
            continue   # padded region: all-zero target
        center_orig = center_aug * rate
        j = int(round((center_orig - PSEUDO_WIN_S / 2) / PSEUDO_HOP_S))
        j = min(max(j, 0), n_win - 1)
        targets[f] = psl.labels[j]
    return targets


def train_strong(student: WeakModel, records, pseudo_per_clip,
                 config: TrainConfig):
    """Train the frame-level model from pseudo-strong labels.

    The conv backbone starts from the student's weights; loss is
    per-output-frame BCE against the nearest pseudo window.
    """
    if len(pseudo_per_clip) != len(records):
        raise SeqshotError("pseudo labels missing for some clips")
    n_classes = student.config.n_classes
    model = StrongModel(replace(student.config, seed=config.seed))
    model.init_backbone_from(student)
    rng = np.random.default_rng(config.seed)
    weights = _class_weights(records, n_classes)
    steps_per_epoch = max(1, (len(records) + config.batch_size - 1)
                          // config.batch_size)
    total_steps = max(1, config.epochs * steps_per_epoch)
    params = model.params()
    state = nn.adamw_init(params)
    step = 0
    loss_curve = []
    for _ in range(config.epochs):
        epoch_loss = 0.0
        for _ in range(steps_per_epoch):
            idxs = rng.choice(len(records), size=min(config.batch_size,
                                                     len(records)),
                              replace=True, p=weights)
            x, _, meta = _prepare_batch(records, idxs, n_classes, rng, config,
                                        random_crop=False)
            logits, cache = model.forward(x)
            n_out = logits.shape[2]
            y = np.zeros((len(idxs), n_classes, n_out))
            for k, mt in enumerate(meta):
                t_self = _frame_targets(pseudo_per_clip[mt["idx"]], n_out,
                                        mt["rate"], mt["off"], mt["valid"])
                if mt["partner"] is not None and mt["lam"] < 1.0:
                    pm = meta[mt["partner"]]
                    t_mix = _frame_targets(pseudo_per_clip[pm["idx"]], n_out,
                                           pm["rate"], pm["off"], pm["valid"])
                    t_self = mt["lam"] * t_self + (1 - mt["lam"]) * t_mix
                y[k] = t_self.T
            loss, dlogits = bce_with_logits(logits, y)
            model.zero_grads()
            model.backward(cache, dlogits)
            lr = nn.one_cycle_lr(step, total_steps, config.peak_lr,
                                 config.final_lr, config.warmup_frac)
            nn.adamw_step(params, model.grads(), state, lr,
                          config.weight_decay)
            model.mark_updated()
            epoch_loss += loss
            step += 1
        loss_curve.append(epoch_loss / steps_per_epoch)
    model.loss_curve = loss_curve
    return model


# -- embedding extraction ----------------------------------------------------------------

def _logmel_input(w):
    if len(w.samples) < int(0.5 * dsp.SAMPLE_RATE):
        raise EmptyInputError("need at least 0.5 s of audio to embed")
    return dsp.logmel(w)[None, None, :, :]


def embed_pooled(model: WeakModel, w: dsp.Waveform):
    """Fixed-length pooled embedding, any duration >= 0.5 s."""
    return model.embed(_logmel_input(w))[0]


def embed_frames(model: StrongModel, w: dsp.Waveform):
    """(T//32, E) embedding sequence, one frame per 320 ms.

    With the default config the frames tap an intermediate backbone
    stage and flatten (channels x frequency); E = C_tap * F_tap.  With
    ``embed_tap=None`` the frames are the pre-classifier neck features
    (E = embed_dim), which pool frequency away entirely.
    """
    x = _logmel_input(w)
    tap = model.config.embed_tap
    if tap is None:
        feats = model.features(x)
        return feats[0].T.copy()
    if not 1 <= tap <= len(model.config.channels):
        raise SeqshotError(f"embed_tap {tap} outside backbone depth")
    h = x
    for layer in model.backbone.layers[:2 * tap]:     # conv+relu per stage
        h, _ = layer.forward(h)
    per_block = FRAMES_PER_EMBED // 2 ** tap
    if per_block < 1:
        raise SeqshotError(f"embed_tap {tap} below the 320 ms frame rate")
    t = h.shape[2] // per_block
    return np.stack([
        h[0, :, i * per_block: (i + 1) * per_block, :].mean(axis=1).reshape(-1)
        for i in range(t)])


def embed_frames_normalized(model: StrongModel, w: dsp.Waveform):
    """Embedding frames minus their per-recording mean frame.

    Removing the recording-wide mean discards the static channel
    response (microphone distance, room coloration, broadband gain), so
    the few-shot detector sees what changes over time rather than what
    the recording sounds like overall.
    """
    frames = embed_frames(model, w)
    return frames - frames.mean(axis=0)

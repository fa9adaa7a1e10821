"""Audio I/O, logmel extraction, and signal-domain augmentations.

Audio is mono float64 in [-1, 1] at 16 kHz after loading.  Logmel
features are (T, 64) float64 arrays: 25 ms Hann windows at 10 ms hops,
FFT size 512, 64 HTK-mel triangular filters spanning 0-8000 Hz with
unit peak, natural log with a 1e-6 floor.
"""

import struct
import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import (
    EmptyInputError,
    FormatError,
    ShapeError,
    TruncatedFileError,
    UnsupportedFormatError,
    VersionMismatchError,
)

SAMPLE_RATE = 16000
FRAME_LEN = 400     # 25 ms
FRAME_HOP = 160     # 10 ms
FFT_SIZE = 512
N_MELS = 64
FRAME_HOP_S = FRAME_HOP / SAMPLE_RATE
FRAME_LEN_S = FRAME_LEN / SAMPLE_RATE
LOG_FLOOR = 1e-6

_SINC_HALF_TAPS = 8   # 16-tap windowed-sinc resampler
_KAISER_BETA = 8.0


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise ShapeError("waveform must be a non-empty 1-d array")

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate


# -- WAV I/O -----------------------------------------------------------------

def load_wav(path):
    """Load a PCM16 RIFF/WAVE file: mono-mixed, resampled to 16 kHz."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
        if head != b"RIFF":
            raise FormatError(f"{path}: not a RIFF file")
        with wave.open(str(path), "rb") as f:
            sampwidth = f.getsampwidth()
            if sampwidth != 2:
                raise UnsupportedFormatError(
                    f"{path}: only PCM16 supported, got {8 * sampwidth}-bit"
                )
            n_ch = f.getnchannels()
            sr = f.getframerate()
            raw = f.readframes(f.getnframes())
    except wave.Error as e:
        msg = str(e)
        if "unknown format" in msg or "compression" in msg.lower():
            raise UnsupportedFormatError(f"{path}: {msg}") from e
        raise FormatError(f"{path}: {msg}") from e
    except EOFError as e:
        raise FormatError(f"{path}: truncated header") from e
    x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_ch > 1:
        x = x[: len(x) - len(x) % n_ch].reshape(-1, n_ch).mean(axis=1)
    if len(x) < 1:
        raise EmptyInputError(f"{path}: no samples")
    if sr != SAMPLE_RATE:
        x = _resample(x, sr / SAMPLE_RATE)
    return Waveform(np.clip(x, -1.0, 1.0), SAMPLE_RATE)


def write_wav(path, w: Waveform):
    """Write mono PCM16 little-endian."""
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate)
        f.writeframes(pcm.tobytes())


# -- Resampling --------------------------------------------------------------

_KAISER_TABLE_N = 1 << 16
_kaiser_table = None


def _kaiser(u, half):
    """Kaiser window on tap offsets u in [-half, half].

    Evaluated by linear interpolation of a dense precomputed table
    (the Bessel function is far too slow to call per audio sample);
    interpolation error is ~1e-8, well under the resampler tolerances.
    """
    global _kaiser_table
    if _kaiser_table is None:
        grid = np.linspace(-half, half, _KAISER_TABLE_N)
        arg = np.maximum(1.0 - (grid / half) ** 2, 0.0)
        _kaiser_table = np.i0(_KAISER_BETA * np.sqrt(arg)) / np.i0(_KAISER_BETA)
    scaled = (np.clip(u, -half, half) + half) \
        * ((_KAISER_TABLE_N - 1) / (2.0 * half))
    lo = np.minimum(scaled.astype(np.int64), _KAISER_TABLE_N - 2)
    frac = scaled - lo
    return _kaiser_table[lo] * (1.0 - frac) + _kaiser_table[lo + 1] * frac


def _resample(x, step):
    """Windowed-sinc resample: output[n] = x(n * step), step in input samples.

    16-tap Kaiser-windowed sinc, kernel renormalized per output sample so
    constant signals are preserved exactly.
    """
    n_out = int(round(len(x) / step))
    if n_out < 1:
        raise EmptyInputError("resampled signal would be empty")
    half = _SINC_HALF_TAPS
    cutoff = min(1.0, 1.0 / step)
    taps = np.arange(-half + 1, half + 1)          # 16 taps
    # the kernel row depends on the output position only through its
    # fractional part, so tabulate rows on a fine fractional grid and
    # interpolate (direct evaluation per sample is orders slower)
    n_grid = 4096
    fgrid = np.arange(n_grid + 1) / n_grid
    ug = fgrid[:, None] - taps[None, :]             # offsets in (-8, 8]
    table = cutoff * np.sinc(cutoff * ug) * _kaiser(ug, half)
    pos = np.arange(n_out) * step
    base = np.floor(pos).astype(np.int64)
    scaled = (pos - base) * n_grid
    lo = scaled.astype(np.int64)
    blend = (scaled - lo)[:, None]
    kern = table[lo] * (1.0 - blend) + table[lo + 1] * blend
    kern /= kern.sum(axis=1, keepdims=True)
    idx = base[:, None] + taps[None, :]
    xp = np.pad(x, (half, half + 1))
    return (xp[idx + half] * kern).sum(axis=1)


def augment_resample(w: Waveform, rate_factor):
    """Playback-speed change; length scales by 1/rate_factor.

    The declared sample rate is unchanged, so pitch shifts with speed.
    """
    if not 0.9 <= rate_factor <= 1.1:
        raise ValueError(f"rate_factor {rate_factor} outside [0.9, 1.1]")
    if rate_factor == 1.0:
        return Waveform(w.samples.copy(), w.sample_rate)
    return Waveform(_resample(w.samples, rate_factor), w.sample_rate)


# -- Logmel ------------------------------------------------------------------

def _hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, fft_size=FFT_SIZE, sample_rate=SAMPLE_RATE,
                   f_low=0.0, f_high=8000.0):
    """Triangular unit-peak filters on the HTK mel scale; (n_mels, bins)."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high),
                                     n_mels + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    fb = np.zeros((n_mels, len(bin_hz)))
    for k in range(n_mels):
        lo, center, hi = edges_hz[k], edges_hz[k + 1], edges_hz[k + 2]
        up = (bin_hz - lo) / (center - lo)
        down = (hi - bin_hz) / (hi - center)
        fb[k] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_band_center_hz(band, n_mels=N_MELS, f_low=0.0, f_high=8000.0):
    """Center frequency (peak of the triangle) of one mel band."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high),
                                  n_mels + 2))
    return float(edges[band + 1])


_FILTERBANK = mel_filterbank()
_WINDOW = _hann(FRAME_LEN)


def logmel(w: Waveform):
    """(T, 64) log mel powers; T = 1 + floor((N - 400) / 160)."""
    x = w.samples
    if len(x) < FRAME_LEN:
        raise EmptyInputError(
            f"need >= {FRAME_LEN} samples for one window, got {len(x)}"
        )
    n_frames = 1 + (len(x) - FRAME_LEN) // FRAME_HOP
    frames = np.lib.stride_tricks.as_strided(
        x, shape=(n_frames, FRAME_LEN),
        strides=(x.strides[0] * FRAME_HOP, x.strides[0]),
    )
    spec = np.fft.rfft(frames * _WINDOW, n=FFT_SIZE, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    mel_power = power @ _FILTERBANK.T
    return np.log(mel_power + LOG_FLOOR)


# -- Signal-domain augmentations ----------------------------------------------

def augment_gain(w: Waveform, gain_db):
    """Scale by 10^(gain_db/20), hard-clipped to [-1, 1]."""
    if not -20.0 <= gain_db <= 20.0:
        raise ValueError(f"gain_db {gain_db} outside [-20, 20]")
    y = w.samples * 10.0 ** (gain_db / 20.0)
    return Waveform(np.clip(y, -1.0, 1.0), w.sample_rate)


def spec_augment(m, rng, time_masks=2, freq_masks=2, max_t=20, max_f=8):
    """SpecAugment-style masking; mask zones are set to the matrix mean.

    Draw order per mask: width ~ U{0..max}, then position.  Time masks
    are drawn before frequency masks.
    """
    t, bands = m.shape
    if max_t >= t:
        raise ShapeError(f"max_t {max_t} must be < T {t}")
    if max_f >= bands:
        raise ShapeError(f"max_f {max_f} must be < bands {bands}")
    out = m.copy()
    fill = m.mean()
    for _ in range(time_masks):
        width = int(rng.integers(0, max_t + 1))
        start = int(rng.integers(0, t - width + 1))
        out[start:start + width, :] = fill
    for _ in range(freq_masks):
        width = int(rng.integers(0, max_f + 1))
        start = int(rng.integers(0, bands - width + 1))
        out[:, start:start + width] = fill
    return out


MIXUP_ALPHA = 0.3


def draw_mixup_lambda(rng, alpha=MIXUP_ALPHA):
    return float(rng.beta(alpha, alpha))


def mixup(a, b, labels_a, labels_b, lam):
    """Convex combination of two logmels and their multi-hot labels."""
    if a.shape != b.shape:
        raise ShapeError(f"mixup shape mismatch: {a.shape} vs {b.shape}")
    labels_a = np.asarray(labels_a, dtype=np.float64)
    labels_b = np.asarray(labels_b, dtype=np.float64)
    if labels_a.shape != labels_b.shape:
        raise ShapeError(
            f"mixup label mismatch: {labels_a.shape} vs {labels_b.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    return lam * a + (1.0 - lam) * b, lam * labels_a + (1.0 - lam) * labels_b


def convolve_rir(w: Waveform, rir: Waveform):
    """Full linear convolution, truncated to len(w), renormalized so the
    output peak equals the original peak of w."""
    if len(rir.samples) >= len(w.samples):
        raise ShapeError("rir must be shorter than the signal")
    y = fftconvolve(w.samples, rir.samples)[: len(w.samples)]
    peak = np.abs(w.samples).max()
    cur = np.abs(y).max()
    if cur > 0:
        y = y * (peak / cur)
    return Waveform(y, w.sample_rate)


# -- LogMel serialization ------------------------------------------------------

LOGMEL_MAGIC = b"SQLM"
LOGMEL_VERSION = 1


def write_logmel(path, m):
    m = np.ascontiguousarray(m, dtype="<f4")
    with open(path, "wb") as f:
        f.write(LOGMEL_MAGIC)
        f.write(struct.pack("<III", LOGMEL_VERSION, m.shape[0], m.shape[1]))
        f.write(m.tobytes())


def read_logmel(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != LOGMEL_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {LOGMEL_MAGIC!r}")
        head = f.read(12)
        if len(head) != 12:
            raise TruncatedFileError("logmel header truncated")
        version, t, bands = struct.unpack("<III", head)
        if version != LOGMEL_VERSION:
            raise VersionMismatchError(f"logmel version {version}")
        raw = f.read(4 * t * bands)
        if len(raw) != 4 * t * bands:
            raise TruncatedFileError("logmel payload truncated")
    return np.frombuffer(raw, dtype="<f4").reshape(t, bands).astype(np.float64)

"""Audio to fixed-size grayscale Mel-spectrogram images.

Pipeline: fix clip length -> framed STFT (no centre padding) -> power ->
HTK mel filterbank -> dB relative to the clip's peak with an 80 dB floor ->
area-average resize to 40x100 -> min/max scaling to [0, 1].
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

AMIN = 1e-10
TOP_DB = 80.0
IMAGE_MAGIC = b"QVIMG1"


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if np.asarray(self.samples).size == 0:
            raise ValueError("audio clip has no samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftParams:
    window_size: int = 2048
    hop_length: int = 512
    n_fft: int = 2048
    window_kind: str = "hann"

    def __post_init__(self):
        if min(self.window_size, self.hop_length, self.n_fft) <= 0:
            raise ValueError("window_size, hop_length and n_fft must be positive")
        if self.window_size > self.n_fft:
            raise ValueError(f"window_size {self.window_size} exceeds n_fft {self.n_fft}")
        if self.hop_length > self.window_size:
            raise ValueError(f"hop_length {self.hop_length} exceeds window_size {self.window_size}")
        if self.window_kind not in ("hann", "hamming"):
            raise ValueError(f"window_kind must be 'hann' or 'hamming', got {self.window_kind!r}")


@dataclass(frozen=True)
class MelParams:
    """``f_max=None`` means Nyquist. ``ref_power=None`` means the spectrogram max."""

    n_mels: int = 128
    f_min: float = 0.0
    f_max: float | None = None
    ref_power: float | None = None

    def resolved_fmax(self, sample_rate: int) -> float:
        return sample_rate / 2 if self.f_max is None else float(self.f_max)

    def validate(self, sample_rate: int) -> None:
        f_max = self.resolved_fmax(sample_rate)
        if self.n_mels < 1:
            raise ValueError(f"n_mels must be >= 1, got {self.n_mels}")
        if not 0 <= self.f_min < f_max <= sample_rate / 2:
            raise ValueError(
                f"need 0 <= f_min < f_max <= sample_rate/2, got f_min={self.f_min}, "
                f"f_max={f_max}, sample_rate={sample_rate}"
            )


class FilterbankError(ValueError):
    """A mel filter covers no FFT bin."""


def hann_window(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def hamming_window(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def n_frames(length: int, window_size: int, hop_length: int) -> int:
    return 1 + (length - window_size) // hop_length


def stft(clip: AudioClip, p: StftParams = StftParams()) -> np.ndarray:
    """Complex STFT, shape ``(n_fft // 2 + 1, n_frames)``.

    Frame ``t`` starts at sample ``t * hop_length``; frames never extend past
    the signal. Windows shorter than ``n_fft`` are zero-padded on the right.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) < p.window_size:
        raise ValueError(f"clip has {len(x)} samples, shorter than one window ({p.window_size})")
    window = hann_window(p.window_size) if p.window_kind == "hann" else hamming_window(p.window_size)
    t = n_frames(len(x), p.window_size, p.hop_length)
    frames = np.lib.stride_tricks.sliding_window_view(x, p.window_size)[:: p.hop_length][:t]
    return np.fft.rfft(frames * window, n=p.n_fft, axis=1).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(sample_rate: int, p: MelParams) -> np.ndarray:
    """``n_mels + 2`` frequencies (Hz); filter ``m`` spans edges ``m .. m+2`` and peaks at ``m+1``."""
    p.validate(sample_rate)
    mels = np.linspace(hz_to_mel(p.f_min), hz_to_mel(p.resolved_fmax(sample_rate)), p.n_mels + 2)
    return mel_to_hz(mels)


def mel_center_frequencies(sample_rate: int, p: MelParams = MelParams()) -> np.ndarray:
    return mel_band_edges(sample_rate, p)[1:-1]


def mel_filterbank(sample_rate: int, p: MelParams = MelParams(), n_fft: int = 2048) -> np.ndarray:
    """Triangular filters with unit peak, shape ``(n_mels, n_fft // 2 + 1)``."""
    edges = mel_band_edges(sample_rate, p)
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.sum(axis=1) == 0)
    if empty.size:
        raise FilterbankError(
            f"mel filter {int(empty[0])} has no FFT bin in its support "
            f"({edges[empty[0]]:.2f}-{edges[empty[0] + 2]:.2f} Hz); "
            f"reduce n_mels or increase n_fft"
        )
    return fb


def power_to_db(S: np.ndarray, ref: float | None = None, top_db: float = TOP_DB) -> np.ndarray:
    """``10 log10(S / ref)`` clipped to ``top_db`` below the maximum.

    ``ref=None`` uses ``max(S)``.
    """
    S = np.asarray(S, dtype=np.float64)
    ref_value = float(S.max()) if ref is None else float(ref)
    out = 10.0 * np.log10(np.maximum(S, AMIN)) - 10.0 * np.log10(max(ref_value, AMIN))
    return np.maximum(out, out.max() - top_db)


def mel_spectrogram(
    clip: AudioClip,
    stft_params: StftParams = StftParams(),
    mel_params: MelParams = MelParams(),
) -> np.ndarray:
    """dB Mel spectrogram, shape ``(n_mels, n_frames)``; low frequencies in row 0."""
    power = np.abs(stft(clip, stft_params)) ** 2
    fb = mel_filterbank(clip.sample_rate, mel_params, stft_params.n_fft)
    return power_to_db(fb @ power, mel_params.ref_power)


def _area_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Row-stochastic ``(n_dst, n_src)`` matrix of fractional overlaps."""
    scale = n_src / n_dst
    w = np.zeros((n_dst, n_src))
    for i in range(n_dst):
        a, b = i * scale, (i + 1) * scale
        for j in range(int(math.floor(a)), min(int(math.ceil(b)), n_src)):
            w[i, j] = min(b, j + 1) - max(a, j)
    return w / scale


def _linear_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Pixel-centre aligned linear interpolation matrix ``(n_dst, n_src)``."""
    w = np.zeros((n_dst, n_src))
    pos = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
    pos = np.clip(pos, 0, n_src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = pos - lo
    w[np.arange(n_dst), lo] += 1 - frac
    w[np.arange(n_dst), hi] += frac
    return w


def resize_image(src: np.ndarray, target_h: int = 40, target_w: int = 100) -> np.ndarray:
    """Resample a 2-D array to ``(target_h, target_w, 1)``.

    Shrinking averages each output cell's source region (fractional overlaps
    weighted by area). An axis that must grow uses linear interpolation instead.
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim != 2 or src.size == 0:
        raise ValueError(f"resize_image needs a non-empty 2-D array, got shape {src.shape}")
    h, w = src.shape
    rows = _area_weights(h, target_h) if target_h <= h else _linear_weights(h, target_h)
    cols = _area_weights(w, target_w) if target_w <= w else _linear_weights(w, target_w)
    return (rows @ src @ cols.T)[:, :, None]


def normalize01(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains NaN or Inf")
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def fix_length(clip: AudioClip, duration_s: float) -> AudioClip:
    """Zero-pad or truncate to ``round(duration_s * sample_rate)`` samples."""
    n = int(round(duration_s * clip.sample_rate))
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) >= n:
        return AudioClip(x[:n], clip.sample_rate)
    return AudioClip(np.concatenate([x, np.zeros(n - len(x))]), clip.sample_rate)


@dataclass(frozen=True)
class DspConfig:
    stft: StftParams = StftParams()
    mel: MelParams = MelParams()
    duration_s: float = 2.0
    height: int = 40
    width: int = 100


def clip_to_image(clip: AudioClip, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Full preprocessing chain; returns a ``(height, width, 1)`` array in [0, 1]."""
    clip = fix_length(clip, cfg.duration_s)
    spec = mel_spectrogram(clip, cfg.stft, cfg.mel)
    return normalize01(resize_image(spec, cfg.height, cfg.width))


# -- file formats -------------------------------------------------------------

def read_wav(path, offset_s: float = 0.0, duration_s: float | None = None) -> AudioClip:
    """Read 16-bit PCM or 32-bit float WAV; stereo files keep the first channel."""
    sr, data = wavfile.read(str(path))
    if data.ndim == 2:
        data = data[:, 0]
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample type {data.dtype}")
    start = int(round(offset_s * sr))
    stop = None if duration_s is None else start + int(round(duration_s * sr))
    return AudioClip(x[start:stop], int(sr))


def write_wav(path, clip: AudioClip, pcm16: bool = True) -> None:
    x = np.asarray(clip.samples, dtype=np.float64)
    if pcm16:
        data = np.clip(np.round(x * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(np.float32)
    wavfile.write(str(path), clip.sample_rate, data)


def image_to_bytes(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"image must be (height, width, channels), got shape {img.shape}")
    return IMAGE_MAGIC + struct.pack("<3I", *img.shape) + img.astype("<f8").tobytes(order="C")


def image_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one QVIMG1 block at ``offset``; returns ``(image, next_offset)``."""
    if buf[offset:offset + 6] != IMAGE_MAGIC:
        raise ValueError("not a QVIMG1 image block")
    h, w, c = struct.unpack_from("<3I", buf, offset + 6)
    start = offset + 18
    end = start + 8 * h * w * c
    if end > len(buf):
        raise ValueError("truncated QVIMG1 image block")
    img = np.frombuffer(buf[start:end], dtype="<f8").reshape(h, w, c).astype(np.float64)
    return img, end


def save_image(path, img: np.ndarray) -> None:
    Path(path).write_bytes(image_to_bytes(img))


def load_image(path) -> np.ndarray:
    return image_from_bytes(Path(path).read_bytes())[0]

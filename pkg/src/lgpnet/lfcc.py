"""Linear-frequency cepstral feature extraction.

Waveforms are framed with a 20 ms Hamming window and 10 ms shift, passed
through a 1024-point FFT and a bank of linearly spaced triangular filters,
log-compressed and DCT-transformed.  The static vector is log-energy plus
19 cepstra; delta and delta-delta columns bring the dimension to 60.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .corpus import AudioClip
from .errors import ConfigError, FormatError, ShapeError

LOG_FLOOR = 1e-10

FEATURE_KINDS = ("lfcc", "lgp", "lgp_group")
_KIND_CODE = {kind: i for i, kind in enumerate(FEATURE_KINDS)}

_CACHE_MAGIC = b"FCH1"
_CACHE_VERSION = 1


@dataclass
class LfccConfig:
    frame_len_ms: float = 20.0
    frame_shift_ms: float = 10.0
    fft_size: int = 1024
    n_filters: int = 20
    n_ceps: int = 19
    include_energy: bool = True
    deltas: bool = True

    def __post_init__(self):
        if self.n_ceps >= self.n_filters:
            raise ConfigError("n_ceps must be smaller than n_filters")
        if self.frame_len_ms <= 0 or self.frame_shift_ms <= 0 or self.fft_size <= 0:
            raise ConfigError("frame/fft sizes must be positive")

    def frame_len(self, sample_rate: int) -> int:
        return int(round(self.frame_len_ms * sample_rate / 1000.0))

    def frame_shift(self, sample_rate: int) -> int:
        return int(round(self.frame_shift_ms * sample_rate / 1000.0))

    @property
    def n_static(self) -> int:
        return self.n_ceps + (1 if self.include_energy else 0)

    @property
    def n_dims(self) -> int:
        return self.n_static * (3 if self.deltas else 1)


@dataclass
class FeatureMatrix:
    """T x D matrix of per-frame features (time-major)."""

    values: np.ndarray
    dim_kind: str = "lfcc"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError("FeatureMatrix values must be 2-d (frames x dims)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("FeatureMatrix contains non-finite values")
        if self.dim_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown dim_kind {self.dim_kind!r}")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]


def frame_and_window(clip: AudioClip, cfg: LfccConfig) -> np.ndarray:
    """Slice a clip into Hamming-windowed frames (n_frames x frame_len).

    Clips shorter than one frame are zero-padded to exactly one frame;
    trailing samples that do not fill a whole frame are dropped.
    """
    flen = cfg.frame_len(clip.sample_rate)
    shift = cfg.frame_shift(clip.sample_rate)
    if cfg.fft_size < flen:
        raise ConfigError(f"fft_size {cfg.fft_size} is smaller than the frame length {flen}")
    x = clip.samples
    if x.size < flen:
        x = np.concatenate([x, np.zeros(flen - x.size)])
    n_frames = (x.size - flen) // shift + 1
    starts = shift * np.arange(n_frames)
    frames = x[starts[:, None] + np.arange(flen)[None, :]]
    return frames * np.hamming(flen)


def power_spectrum(frame: np.ndarray, fft_size: int = 1024) -> np.ndarray:
    """|FFT|^2 of one frame (or a stack of frames) for bins 0..fft_size/2."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > fft_size:
        raise ShapeError(f"frame length {frame.shape[-1]} exceeds fft_size {fft_size}")
    spectrum = np.fft.rfft(frame, n=fft_size)
    return np.abs(spectrum) ** 2


def linear_filterbank(sample_rate: int, fft_size: int, n_filters: int) -> np.ndarray:
    """Triangular filters with linearly spaced edges over 0..sample_rate/2."""
    freqs = np.fft.rfftfreq(fft_size, d=1.0 / sample_rate)
    edges = np.linspace(0.0, sample_rate / 2.0, n_filters + 2)
    fb = np.zeros((n_filters, freqs.size))
    for i in range(n_filters):
        left, center, right = edges[i], edges[i + 1], edges[i + 2]
        rising = (freqs >= left) & (freqs <= center)
        falling = (freqs > center) & (freqs <= right)
        fb[i, rising] = (freqs[rising] - left) / (center - left)
        fb[i, falling] = (right - freqs[falling]) / (right - center)
    return fb


def _delta(feat: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression-based delta over +/-width frames, edges replicated."""
    padded = np.pad(feat, ((width, width), (0, 0)), mode="edge")
    denom = 2.0 * sum(n * n for n in range(1, width + 1))
    out = np.zeros_like(feat)
    for n in range(1, width + 1):
        out += n * (padded[width + n : padded.shape[0] - width + n] - padded[width - n : -width - n])
    return out / denom


def lfcc_extract(clip: AudioClip, cfg: LfccConfig | None = None) -> FeatureMatrix:
    """Full LFCC pipeline: frames -> power spectrum -> filterbank -> log -> DCT.

    The static vector keeps DCT coefficients 1..n_ceps; log frame energy is
    prepended when include_energy is set.  Log inputs are floored at 1e-10
    so silent frames stay finite.
    """
    cfg = cfg or LfccConfig()
    frames = frame_and_window(clip, cfg)
    spec = power_spectrum(frames, cfg.fft_size)
    fb = linear_filterbank(clip.sample_rate, cfg.fft_size, cfg.n_filters)
    fbank = spec @ fb.T
    log_fbank = np.log(np.maximum(fbank, LOG_FLOOR))
    ceps = dct(log_fbank, type=2, axis=1, norm="ortho")[:, 1 : cfg.n_ceps + 1]
    if cfg.include_energy:
        energy = np.log(np.maximum(np.sum(frames**2, axis=1), LOG_FLOOR))
        static = np.column_stack([energy, ceps])
    else:
        static = ceps
    if cfg.deltas:
        d1 = _delta(static)
        d2 = _delta(d1)
        feat = np.hstack([static, d1, d2])
    else:
        feat = static
    return FeatureMatrix(values=feat, dim_kind="lfcc")


def fix_length(feat: FeatureMatrix, target_frames: int = 400) -> FeatureMatrix:
    """Force the time axis to target_frames: truncate the tail or tile cyclically."""
    t = feat.n_frames
    if t < 1:
        raise ShapeError("cannot fix the length of an empty feature matrix")
    if t == target_frames:
        return feat
    if t > target_frames:
        values = feat.values[:target_frames]
    else:
        reps = int(np.ceil(target_frames / t))
        values = np.tile(feat.values, (reps, 1))[:target_frames]
    return FeatureMatrix(values=values.copy(), dim_kind=feat.dim_kind)


def write_feature_record(path: str | Path, utt_id: str, feat: FeatureMatrix) -> None:
    """Write one per-utterance cache record (see README for the layout)."""
    uid = utt_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<IIB", _CACHE_VERSION, len(uid), _KIND_CODE[feat.dim_kind]))
        fh.write(uid)
        fh.write(struct.pack("<II", feat.n_frames, feat.n_dims))
        fh.write(np.ascontiguousarray(feat.values, dtype="<f8").tobytes())


def read_feature_record(path: str | Path) -> tuple[str, FeatureMatrix]:
    """Read one cache record back, verifying magic, version, and payload size."""
    raw = Path(path).read_bytes()
    if len(raw) < 13 or raw[:4] != _CACHE_MAGIC:
        raise FormatError(f"{path}: not a feature cache record")
    version, uid_len, kind_code = struct.unpack("<IIB", raw[4:13])
    if version != _CACHE_VERSION:
        raise FormatError(f"{path}: unsupported cache version {version}")
    off = 13
    uid = raw[off : off + uid_len].decode("utf-8")
    off += uid_len
    if len(raw) < off + 8:
        raise FormatError(f"{path}: truncated cache record")
    t, d = struct.unpack("<II", raw[off : off + 8])
    off += 8
    payload = raw[off:]
    if len(payload) != t * d * 8:
        raise FormatError(f"{path}: truncated cache record")
    values = np.frombuffer(payload, dtype="<f8").reshape(t, d)
    kinds = {code: kind for kind, code in _KIND_CODE.items()}
    if kind_code not in kinds:
        raise FormatError(f"{path}: unknown feature kind code {kind_code}")
    return uid, FeatureMatrix(values=values.copy(), dim_kind=kinds[kind_code])

"""Shared test utilities: independent oracles and synthetic data builders.

Everything here is deliberately naive (loops, direct definitions) so the
vectorized library code is checked against a second, unrelated path.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from lgpnet.tensor import Tensor, backward


# ---------------------------------------------------------------------------
# WAV bytes written by hand (independent of scipy's writer)


def wav_bytes_int16(samples: np.ndarray, sample_rate: int = 16000, channels: int = 1) -> bytes:
    data = np.asarray(samples, dtype=np.int16).tobytes()
    byte_rate = sample_rate * channels * 2
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, channels, sample_rate, byte_rate, channels * 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    return header + data


def wav_bytes_float32(samples: np.ndarray, sample_rate: int = 16000) -> bytes:
    data = np.asarray(samples, dtype=np.float32).tobytes()
    byte_rate = sample_rate * 4
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 3, 1, sample_rate, byte_rate, 4, 32)
    header += b"data" + struct.pack("<I", len(data))
    return header + data


def write_wav_int16(path: Path, samples: np.ndarray, sample_rate: int = 16000) -> None:
    path.write_bytes(wav_bytes_int16(samples, sample_rate))


# ---------------------------------------------------------------------------
# frame-count oracle: literally count window placements


def count_frames_by_hand(n_samples: int, frame_len: int, shift: int) -> int:
    if n_samples < frame_len:
        return 1  # zero-padded single frame
    count = 0
    start = 0
    while start + frame_len <= n_samples:
        count += 1
        start += shift
    return count


# ---------------------------------------------------------------------------
# direct O(N^2) DFT oracle


def dft_power_by_hand(frame: np.ndarray, fft_size: int) -> np.ndarray:
    x = np.zeros(fft_size)
    x[: frame.size] = frame
    bins = fft_size // 2 + 1
    out = np.empty(bins)
    n = np.arange(fft_size)
    for k in range(bins):
        c = np.sum(x * np.cos(-2 * np.pi * k * n / fft_size))
        s = np.sum(x * np.sin(-2 * np.pi * k * n / fft_size))
        out[k] = c * c + s * s
    return out


# ---------------------------------------------------------------------------
# finite-difference gradient checking

FD_H = 1e-5
FD_REL_TOL = 1e-4
FD_ABS_FLOOR = 1e-7


def numeric_grad(loss_fn, array: np.ndarray, h: float = FD_H) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. one ndarray in place."""
    grad = np.zeros_like(array)
    flat = array.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def grad_errors(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst relative error with an absolute floor below which errors pass."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = diff <= FD_ABS_FLOOR
    rel = np.where(ok, 0.0, diff / np.maximum(scale, 1e-300))
    return float(rel.max())


def check_gradients(build_loss, tensors: list[Tensor], h: float = FD_H) -> float:
    """Compare backward() gradients of build_loss() against finite differences.

    build_loss must recompute the graph from the tensors' current .data.
    Returns the worst relative error across all checked tensors.
    """
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    backward(loss)
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "analytic gradient missing"
        num = numeric_grad(lambda: build_loss().item(), t.data, h=h)
        worst = max(worst, grad_errors(t.grad, num))
    return worst


# ---------------------------------------------------------------------------
# brute-force EER oracle: FAR/FRR at every score value, naive counting


def eer_by_threshold_sweep(bona: np.ndarray, spoof: np.ndarray) -> float:
    candidates = sorted(set(np.concatenate([bona, spoof]).tolist()))
    points = []
    for t in candidates:
        far = float(np.mean(spoof >= t))
        frr = float(np.mean(bona < t))
        points.append((far, frr))
    points.append((0.0, 1.0))  # accept nothing
    for (far0, frr0), (far1, frr1) in zip(points, points[1:]):
        d0, d1 = far0 - frr0, far1 - frr1
        if (d0 > 0) != (d1 > 0) or d1 == 0 or d0 == 0:
            if d0 == 0:
                return far0
            frac = d0 / (d0 - d1)
            return far0 + frac * (far1 - far0)
    raise AssertionError("no FAR/FRR crossing found")


# ---------------------------------------------------------------------------
# synthetic two-class corpus: band-limited noise vs sinusoid mixtures


def synth_waveform(rng: np.random.Generator, kind: str, n: int = 16000, sr: int = 16000) -> np.ndarray:
    if kind == "noise":
        white = rng.normal(size=n)
        kernel = np.ones(8) / 8.0  # crude low-pass band limiting
        return np.convolve(white, kernel, mode="same") * 0.2
    if kind == "tones":
        t = np.arange(n) / sr
        wave = np.zeros(n)
        for _ in range(3):
            freq = rng.uniform(200.0, 3000.0)
            wave += rng.uniform(0.1, 0.3) * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
        return wave
    raise ValueError(kind)


def build_synth_corpus(root: Path, n_per_class: int = 32, seed: int = 7) -> tuple[Path, Path]:
    """Write WAVs and a protocol file; sinusoid mixtures are the bona fide class.

    Returns (protocol_path, audio_dir).
    """
    rng = np.random.default_rng(seed)
    audio_dir = root / "wav"
    audio_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(n_per_class):
        wave = synth_waveform(rng, "tones")
        utt = f"SYN_B_{i:04d}"
        write_wav_int16(audio_dir / f"{utt}.wav", np.clip(wave, -1, 1) * 32000)
        lines.append(f"SPK1 {utt} - - bonafide")
    for i in range(n_per_class):
        wave = synth_waveform(rng, "noise")
        utt = f"SYN_S_{i:04d}"
        write_wav_int16(audio_dir / f"{utt}.wav", np.clip(wave, -1, 1) * 32000)
        lines.append(f"SPK2 {utt} - A01 spoof")
    protocol = root / "protocol.txt"
    protocol.write_text("\n".join(lines) + "\n")
    return protocol, audio_dir


# ---------------------------------------------------------------------------
# random GMMs with genuine split lineage (no EM), for structural tests


def random_split_gmm(rng: np.random.Generator, order: int, dim: int):
    from lgpnet.gmm import EmConfig, Gmm, binary_split

    cfg = EmConfig(split_epsilon=float(rng.uniform(0.05, 0.3)))
    g = Gmm(
        weights=np.array([1.0]),
        means=rng.normal(size=(1, dim)),
        variances=rng.uniform(0.5, 2.0, size=(1, dim)),
    )
    while g.order < order:
        g = binary_split(g, cfg)
        # jitter so components are distinguishable
        g = Gmm(
            weights=g.weights,
            means=g.means + rng.normal(scale=0.01, size=g.means.shape),
            variances=g.variances * rng.uniform(0.9, 1.1, size=g.variances.shape),
            lineage=g.lineage,
        )
    return g


def random_bank(rng: np.random.Generator, orders: list[int], dim: int):
    from lgpnet.multiscale import GmmBank

    return GmmBank(gmms=[random_split_gmm(rng, order, dim) for order in orders])

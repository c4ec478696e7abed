"""Audio and protocol-file I/O producing labeled utterance manifests.

Only mono 16 kHz PCM WAV is accepted; FLAC corpora must be converted
beforehand.  Protocol files follow the ASVspoof convention of
whitespace-separated ``speaker_id utt_id <unused> attack_id key`` lines.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import FormatError, ManifestError, ProtocolError, UnsupportedAudioError

KEY_BONAFIDE = "bonafide"
KEY_SPOOF = "spoof"

# Class indices used for training labels and logit columns everywhere in
# the package: spoof = 0, bonafide = 1 (bona fide is the "positive" class).
LABEL_SPOOF = 0
LABEL_BONAFIDE = 1


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with samples normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    utt_id: str = ""

    def __post_init__(self):
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("AudioClip requires a non-empty 1-d sample array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


@dataclass(frozen=True)
class UtteranceLabel:
    utt_id: str
    key: str
    attack_id: str | None = None

    def __post_init__(self):
        if self.key not in (KEY_BONAFIDE, KEY_SPOOF):
            raise ValueError(f"key must be '{KEY_BONAFIDE}' or '{KEY_SPOOF}', got {self.key!r}")


@dataclass
class Manifest:
    """Ordered list of (audio path, label) pairs for one corpus split."""

    entries: list[tuple[Path, UtteranceLabel]]
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "dev", "eval"):
            raise ValueError(f"split must be train/dev/eval, got {self.split!r}")
        ids = [label.utt_id for _, label in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate utt_ids in manifest")

    def __len__(self):
        return len(self.entries)


def label_index(label: UtteranceLabel) -> int:
    """Class index of a label: spoof -> 0, bonafide -> 1."""
    return LABEL_BONAFIDE if label.key == KEY_BONAFIDE else LABEL_SPOOF


def read_wav(path: str | Path, utt_id: str = "") -> AudioClip:
    """Read a mono PCM WAV file (16-bit int or 32-bit float samples).

    Integer samples are divided by 2^(bits-1) so both sample formats land
    on the same [-1, 1] scale.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: not a readable PCM WAV file ({exc})") from exc
    if data.ndim != 1:
        raise UnsupportedAudioError(
            f"{path}: {data.shape[1]}-channel audio is unsupported; downmix to mono first"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedAudioError(
            f"{path}: sample format {data.dtype} is unsupported (use 16-bit PCM or 32-bit float)"
        )
    return AudioClip(samples=samples, sample_rate=int(rate), utt_id=utt_id or path.stem)


def parse_protocol(path: str | Path) -> list[UtteranceLabel]:
    """Parse an ASVspoof-style protocol file into utterance labels.

    Each non-empty line holds ``speaker_id utt_id <unused> attack_id key``
    where attack_id is ``-`` for bona fide utterances.
    """
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 5:
                raise ProtocolError(
                    f"{path}:{lineno}: expected 5 whitespace-separated fields, got {len(fields)}"
                )
            _, utt_id, _, attack, key = fields
            if key not in (KEY_BONAFIDE, KEY_SPOOF):
                raise ProtocolError(f"{path}:{lineno}: unknown key {key!r}")
            labels.append(
                UtteranceLabel(utt_id=utt_id, key=key, attack_id=None if attack == "-" else attack)
            )
    return labels


def serialize_protocol(labels: list[UtteranceLabel], path: str | Path) -> None:
    """Write labels back out in the protocol format accepted by parse_protocol."""
    with open(path, "w", encoding="utf-8") as fh:
        for label in labels:
            attack = label.attack_id if label.attack_id is not None else "-"
            fh.write(f"- {label.utt_id} - {attack} {label.key}\n")


def build_manifest(
    protocol: list[UtteranceLabel], audio_dir: str | Path, split: str = "train"
) -> Manifest:
    """Resolve each utt_id to ``audio_dir/<utt_id>.wav`` in protocol order."""
    audio_dir = Path(audio_dir)
    entries = []
    missing = []
    for label in protocol:
        wav = audio_dir / f"{label.utt_id}.wav"
        if not wav.is_file():
            missing.append(label.utt_id)
        else:
            entries.append((wav, label))
    if missing:
        raise ManifestError(f"missing audio files under {audio_dir}: {', '.join(missing)}")
    return Manifest(entries=entries, split=split)

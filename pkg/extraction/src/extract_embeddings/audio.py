"""WAV decoding and a log-mel front end for embedder plugins.

Only PCM WAV is handled here (8/16/24/32-bit, any channel count,
mono-averaged). Anything else raises AudioDecodeError, which the feature
extractor turns into a skipped-and-logged clip rather than a dead run.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import AudioDecodeError


def decode_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """PCM WAV -> (mono float64 waveform in [-1, 1], sample rate)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as handle:
            channels = handle.getnchannels()
            width = handle.getsampwidth()
            rate = handle.getframerate()
            frames = handle.readframes(handle.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioDecodeError(f"{path}: {exc}") from exc
    if width == 1:
        samples = np.frombuffer(frames, dtype=np.uint8).astype(np.float64)
        samples = (samples - 128.0) / 128.0
    elif width == 2:
        samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 3:
        raw = np.frombuffer(frames, dtype=np.uint8)
        if raw.size % 3:
            raise AudioDecodeError(f"{path}: 24-bit stream length not a multiple of 3")
        padded = np.zeros((raw.size // 3, 4), dtype=np.uint8)
        padded[:, 1:] = raw.reshape(-1, 3)
        samples = (padded.view("<i4")[:, 0] >> 8).astype(np.float64) / 8388608.0
    elif width == 4:
        samples = np.frombuffer(frames, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        raise AudioDecodeError(f"{path}: unsupported sample width {width}")
    if channels < 1 or samples.size % channels:
        raise AudioDecodeError(f"{path}: stream does not divide into {channels} channels")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    if samples.size == 0:
        raise AudioDecodeError(f"{path}: no audio frames")
    return samples, rate


def _mel(freq: np.ndarray) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + freq / 700.0)


def _mel_inv(mels: np.ndarray) -> np.ndarray:
    return 700.0 * (10.0 ** (mels / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int, n_fft: int, sample_rate: int, fmin: float, fmax: float
) -> np.ndarray:
    """(n_mels, n_fft//2 + 1) triangular filters on the mel scale."""
    fmax = min(fmax, sample_rate / 2.0)
    edges = _mel_inv(np.linspace(_mel(np.asarray(fmin)), _mel(np.asarray(fmax)),
                                 n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    bank = np.zeros((n_mels, bins.size))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bins - lo) / max(center - lo, 1e-12)
        down = (hi - bins) / max(hi - center, 1e-12)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def log_mel(
    waveform: np.ndarray,
    sample_rate: int,
    n_mels: int = 64,
    win_seconds: float = 0.025,
    hop_seconds: float = 0.010,
    fmin: float = 125.0,
    fmax: float = 7500.0,
    log_offset: float = 1e-3,
) -> np.ndarray:
    """Log-mel spectrogram, (frames, n_mels). Defaults follow the common
    audio-embedder front end: 25 ms Hann windows, 10 ms hop, 64 bands."""
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1:
        raise AudioDecodeError(f"waveform must be mono, got shape {waveform.shape}")
    win = max(int(round(win_seconds * sample_rate)), 2)
    hop = max(int(round(hop_seconds * sample_rate)), 1)
    if waveform.size < win:
        waveform = np.pad(waveform, (0, win - waveform.size))
    n_frames = 1 + (waveform.size - win) // hop
    window = np.hanning(win)
    frames = np.stack([
        waveform[start : start + win] * window
        for start in range(0, n_frames * hop, hop)
    ])
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    bank = mel_filterbank(n_mels, win, sample_rate, fmin, fmax)
    return np.log(power @ bank.T + log_offset)

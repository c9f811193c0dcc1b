"""STFT, mel/log-linear spectrograms and noise utilities shared by the extractors."""

from __future__ import annotations

import numpy as np
from scipy.signal import get_window

from .types import FeatureKind, FeatureTensor, MultichannelClip, SpectralTensor

LOG_FLOOR = 1e-10
DEFAULT_FFT = 512
DEFAULT_HOP = 100
DEFAULT_N_MELS = 64

_WINDOWS = {"hann": "hann", "hamming": "hamming", "rect": "boxcar"}


def analysis_window(kind: str, fft_size: int) -> np.ndarray:
    if kind not in _WINDOWS:
        raise ValueError(f"unsupported window {kind!r}; choose from {sorted(_WINDOWS)}")
    # periodic (DFT-even) window
    return get_window(_WINDOWS[kind], fft_size, fftbins=True)


def n_stft_frames(n_samples: int, hop: int) -> int:
    return -(-n_samples // hop)


def stft(clip: MultichannelClip, fft_size: int = DEFAULT_FFT, hop: int = DEFAULT_HOP,
         window: str = "hann") -> SpectralTensor:
    """Centre-padded one-sided STFT of every channel.

    Frame ``t`` is centred on sample ``t * hop``; the signal is reflect-padded
    by ``fft_size // 2`` so that ``ceil(n_samples / hop)`` frames come out
    (96000 samples at hop 100 give 960 frames). No FFT normalisation is
    applied, so per frame ``sum_k c_k |X_k|^2 = fft_size * sum_n (w x)^2``
    with ``c_k = 1`` at DC/Nyquist and 2 elsewhere.
    """
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise ValueError(f"fft_size must be a power of two, got {fft_size}")
    if hop <= 0 or hop > fft_size:
        raise ValueError(f"hop must be in [1, fft_size], got {hop}")
    win = analysis_window(window, fft_size)
    x = clip.samples
    if x.shape[1] == 0:
        raise ValueError("cannot analyse an empty clip")
    n_frames = n_stft_frames(x.shape[1], hop)
    half = fft_size // 2
    mode = "reflect" if x.shape[1] > 1 else "constant"
    padded = np.pad(x, ((0, 0), (half, half)), mode=mode)
    need = (n_frames - 1) * hop + fft_size
    if padded.shape[1] < need:
        padded = np.pad(padded, ((0, 0), (0, need - padded.shape[1])))
    frames = np.lib.stride_tricks.sliding_window_view(padded, fft_size, axis=1)[:, ::hop][:, :n_frames]
    bins = np.fft.rfft(frames * win, axis=-1)
    return SpectralTensor(bins, hop, fft_size, clip.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int, sample_rate: float) -> np.ndarray:
    """``n_mels + 2`` frequencies equispaced in mel between 0 and Nyquist."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))


def mel_filterbank(n_mels: int = DEFAULT_N_MELS, fft_size: int = DEFAULT_FFT,
                   sample_rate: float = 48000.0) -> np.ndarray:
    """HTK-style triangular filterbank, shape (n_mels, fft_size // 2 + 1).

    Peaks are 1 (no area normalisation). A filter narrower than the FFT bin
    spacing that would catch no bin gets unit weight on the bin nearest its
    centre, so every row has support.
    """
    n_freqs = fft_size // 2 + 1
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if n_mels > n_freqs:
        raise ValueError(f"n_mels={n_mels} exceeds the {n_freqs} available FFT bins")
    freqs = np.arange(n_freqs) * sample_rate / fft_size
    edges = mel_band_edges(n_mels, sample_rate)
    lo, centre, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (centre - lo)
    down = (hi - freqs) / (hi - centre)
    fb = np.maximum(0.0, np.minimum(up, down))
    for i in np.flatnonzero(fb.sum(axis=1) == 0):
        fb[i, np.argmin(np.abs(freqs - edges[i + 1]))] = 1.0
    return fb


def _power(spec: SpectralTensor, channel: int) -> np.ndarray:
    if not 0 <= channel < spec.n_channels:
        raise IndexError(f"channel {channel} out of range for {spec.n_channels} channels")
    return np.abs(spec.bins[channel]) ** 2


def log_mel_spectrogram(spec: SpectralTensor, channel: int = 0, fb: np.ndarray | None = None) -> FeatureTensor:
    if fb is None:
        fb = mel_filterbank(DEFAULT_N_MELS, spec.fft_size, spec.sample_rate)
    if fb.shape[1] != spec.n_freqs:
        raise ValueError(f"filterbank has {fb.shape[1]} bins, spectrum has {spec.n_freqs}")
    values = np.log(LOG_FLOOR + _power(spec, channel) @ fb.T)
    return FeatureTensor(values[None], FeatureKind.LOG_MEL,
                         {"channel": channel, "n_mels": fb.shape[0]})


def log_linear_spectrogram(spec: SpectralTensor, channel: int = 0, n_bins: int = 64) -> FeatureTensor:
    if not 1 <= n_bins <= spec.n_freqs:
        raise ValueError(f"n_bins must be in [1, {spec.n_freqs}], got {n_bins}")
    values = np.log(LOG_FLOOR + _power(spec, channel)[:, :n_bins])
    return FeatureTensor(values[None], FeatureKind.LOG_LIN,
                         {"channel": channel, "n_bins": n_bins,
                          "cutoff_hz": n_bins * spec.sample_rate / spec.fft_size})


def pink_noise(n: int, seed: int, sample_rate: float = 48000.0, f_low: float = 20.0) -> np.ndarray:
    """Unit-RMS pink noise by spectral shaping of white Gaussian noise.

    The magnitude follows ``1/sqrt(f)`` above ``f_low`` and is flat below it
    (DC removed); the corner keeps independent realisations decorrelated.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    n_freqs = n // 2 + 1
    spectrum = rng.standard_normal(n_freqs) + 1j * rng.standard_normal(n_freqs)
    f = np.arange(n_freqs) * sample_rate / n
    gain = np.zeros(n_freqs)
    gain[1:] = 1.0 / np.sqrt(np.maximum(f[1:], f_low))
    x = np.fft.irfft(spectrum * gain, n)
    rms = np.sqrt(np.mean(x ** 2))
    if rms == 0:
        # n too short to carry any non-DC component
        return rng.standard_normal(n)
    return x / rms


def signal_power(x) -> float:
    return float(np.mean(np.square(x)))


def mix_at_snr(signal: MultichannelClip, noise, snr_db: float) -> MultichannelClip:
    """Add ``noise`` scaled by one common gain so the clip-wide SNR is ``snr_db``.

    ``noise`` is either one sequence shared by every channel or an array with
    one row per channel; it is truncated to the signal length. Powers are
    mean squares over all channels jointly.
    """
    noise = np.asarray(noise, dtype=np.float64)
    n = signal.n_samples
    if noise.shape[-1] < n:
        raise ValueError(f"noise has {noise.shape[-1]} samples, signal needs {n}")
    noise = noise[..., :n]
    if noise.ndim == 2 and noise.shape[0] != signal.n_channels:
        raise ValueError(f"noise has {noise.shape[0]} rows for {signal.n_channels} channels")
    noise = np.broadcast_to(noise, signal.samples.shape)
    p_sig = signal_power(signal.samples)
    p_noise = signal_power(noise)
    if p_sig == 0 or p_noise == 0:
        raise ValueError("signal and noise must both have non-zero power")
    gain = np.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return MultichannelClip(signal.samples + gain * noise, signal.sample_rate, signal.channel_mic_ids)

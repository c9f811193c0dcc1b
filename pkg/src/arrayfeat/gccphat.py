"""GCC-PHAT lag features for all microphone pairs or against a reference mic.

Lag sign convention: a positive lag means channel ``j`` receives the wavefront
later than channel ``i``.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .dsp import DEFAULT_N_MELS, log_mel_spectrogram, mel_filterbank
from .types import FeatureKind, FeatureTensor, SpectralTensor, stack_features

PHAT_FLOOR = 1e-12


def pair_list(n_channels: int, mode: str = "all", ref_channel: int = 0) -> list:
    """Channel pairs in stacking order: ``i < j`` lexicographic, or ``(ref, j)``."""
    if n_channels < 2:
        raise ValueError(f"need at least 2 channels, got {n_channels}")
    if mode == "all":
        return list(combinations(range(n_channels), 2))
    if mode == "ref":
        if not 0 <= ref_channel < n_channels:
            raise ValueError(f"ref_channel {ref_channel} out of range for {n_channels} channels")
        return [(ref_channel, j) for j in range(n_channels) if j != ref_channel]
    raise ValueError(f"unknown pairing mode {mode!r}; use 'all' or 'ref'")


def n_feature_channels(n_mics: int, mode: str) -> int:
    return 1 + (n_mics * (n_mics - 1) // 2 if mode == "all" else n_mics - 1)


def lag_axis(width: int) -> np.ndarray:
    """Lags for a plane of ``width`` columns; centred, extra column on the negative side."""
    return np.arange(width) - width // 2


def gcc_lags(spec: SpectralTensor, i: int, j: int, lags) -> np.ndarray:
    """PHAT-weighted cross-correlation of channels i, j at the given lags, shape (T, len(lags))."""
    xi, xj = spec.bins[i], spec.bins[j]
    cross = xi * np.conj(xj)
    cross /= np.maximum(np.abs(xi) * np.abs(xj), PHAT_FLOOR)
    cc = np.fft.irfft(cross, n=spec.fft_size, axis=-1)
    # irfft peaks at -delay for X_i X_j^*; flip so +lag means j is later
    idx = (-np.asarray(lags)) % spec.fft_size
    return cc[:, idx]


def gcc_phat_pair(spec: SpectralTensor, i: int, j: int, n_lag_bins: int,
                  max_lag: int | None = None) -> FeatureTensor:
    """GCC-PHAT plane for one pair over lags ``-(n-1)/2 .. (n-1)/2``."""
    if i == j:
        raise ValueError("GCC-PHAT needs two distinct channels")
    for ch in (i, j):
        if not 0 <= ch < spec.n_channels:
            raise IndexError(f"channel {ch} out of range for {spec.n_channels} channels")
    if n_lag_bins % 2 == 0 or n_lag_bins < 1:
        raise ValueError(f"n_lag_bins must be odd, got {n_lag_bins}")
    if max_lag is not None and n_lag_bins < 2 * max_lag + 1:
        raise ValueError(f"n_lag_bins={n_lag_bins} cannot hold lags up to +/-{max_lag}")
    if n_lag_bins > spec.fft_size:
        raise ValueError("n_lag_bins exceeds the FFT size")
    lags = lag_axis(n_lag_bins)
    return FeatureTensor(gcc_lags(spec, i, j, lags)[None], FeatureKind.GCC_PHAT,
                         {"pair": (i, j), "first_lag": int(lags[0])})


def gcc_phat_features(spec: SpectralTensor, mode: str = "all", n_lag_bins: int = DEFAULT_N_MELS,
                      fb: np.ndarray | None = None, spect_channel: int | None = None,
                      ref_channel: int = 0, max_lag: int | None = None) -> FeatureTensor:
    """Log-mel spectrogram of one channel stacked with GCC-PHAT lag planes.

    Each lag plane is ``n_lag_bins`` wide (lags ``-n//2 .. n - n//2 - 1``) so it
    lines up with the mel axis; when ``max_lag`` is given, lags beyond it
    are zeroed.
    """
    if spec.n_channels < 2:
        raise ValueError(f"GCC-PHAT features need M >= 2 channels, got {spec.n_channels}")
    pairs = pair_list(spec.n_channels, mode, ref_channel)
    if fb is None:
        fb = mel_filterbank(n_lag_bins, spec.fft_size, spec.sample_rate)
    if spect_channel is None:
        spect_channel = ref_channel
    lags = lag_axis(n_lag_bins)
    planes = np.empty((len(pairs), spec.n_frames, n_lag_bins))
    for k, (i, j) in enumerate(pairs):
        planes[k] = gcc_lags(spec, i, j, lags)
    if max_lag is not None:
        planes[:, :, np.abs(lags) > max_lag] = 0.0
    gcc = FeatureTensor(planes, FeatureKind.GCC_PHAT, {"first_lag": int(lags[0])})
    meta = {"feature": "gcc", "mode": mode, "n_lag_bins": n_lag_bins,
            "ref_channel": ref_channel, "spect_channel": spect_channel,
            "max_lag": "none" if max_lag is None else max_lag}
    return stack_features([log_mel_spectrogram(spec, spect_channel, fb), gcc], meta)


def tdoa_argmax(gcc: FeatureTensor, frame: int, plane: int = 0) -> int:
    """Signed lag of the GCC maximum in one frame; ties go to the smaller |lag|."""
    values = gcc.values[plane]
    if not 0 <= frame < values.shape[0]:
        raise IndexError(f"frame {frame} out of range for {values.shape[0]} frames")
    row = values[frame]
    lags = np.arange(row.shape[0]) + gcc.meta.get("first_lag", -(row.shape[0] // 2))
    best = np.flatnonzero(row == row.max())
    return int(min(lags[best], key=lambda lag: (abs(lag), lag)))


def tdoa_track(gcc: FeatureTensor, plane: int = 0) -> np.ndarray:
    return np.array([tdoa_argmax(gcc, t, plane) for t in range(gcc.values.shape[1])])

"""SALSA-IPD and SALSA-Lite: per-bin phase differences against a reference mic,
stacked with a single log-linear spectrogram on the same time-frequency grid."""

from __future__ import annotations

import numpy as np

from .dsp import log_linear_spectrogram
from .geometry import SPEED_OF_SOUND
from .types import FeatureKind, FeatureTensor, SpectralTensor, stack_features

VARIANTS = ("ipd", "lite")


def ipd_map(spec: SpectralTensor, ref: int = 0) -> np.ndarray:
    """Principal-value phase of ``X_ref * conj(X_m)`` for every non-reference m.

    Returns shape (M - 1, T, F) with values in (-pi, pi]. A channel that is the
    reference delayed by tau gives ``2 pi f tau``.
    """
    if spec.n_channels < 2:
        raise ValueError(f"IPD needs M >= 2 channels, got {spec.n_channels}")
    if not 0 <= ref < spec.n_channels:
        raise IndexError(f"reference channel {ref} out of range")
    others = [m for m in range(spec.n_channels) if m != ref]
    # arg(a conj(b)) as a wrapped phase difference: exact zeros for identical channels
    ipd = np.angle(spec.bins[ref])[None] - np.angle(spec.bins[others])
    ipd[ipd > np.pi] -= 2 * np.pi
    ipd[ipd <= -np.pi] += 2 * np.pi
    return ipd


def normalize_ipd(ipd: np.ndarray, freqs: np.ndarray, variant: str, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Lite: path difference ``-c ipd / (2 pi f)`` in metres; Ipd: ``-ipd / 2 pi`` turns.

    Row f = 0 has no phase information and is set to 0 for both variants.
    """
    if variant == "ipd":
        out = -ipd / (2 * np.pi)
    elif variant == "lite":
        out = np.zeros_like(ipd)
        nz = freqs > 0
        out[..., nz] = -c * ipd[..., nz] / (2 * np.pi * freqs[nz])
    else:
        raise ValueError(f"unknown SALSA variant {variant!r}; use one of {VARIANTS}")
    out[..., freqs == 0] = 0.0
    return out


def salsa_features(spec: SpectralTensor, ref: int = 0, variant: str = "lite", n_bins: int = 64,
                   c: float = SPEED_OF_SOUND) -> FeatureTensor:
    """Channel 0: log-linear spectrogram of ``ref``; channels 1..M-1: normalised IPD."""
    if not 1 <= n_bins <= spec.n_freqs:
        raise ValueError(f"n_bins must be in [1, {spec.n_freqs}], got {n_bins}")
    spectro = log_linear_spectrogram(spec, ref, n_bins)
    freqs = spec.frequencies()[:n_bins]
    crop = SpectralTensor(spec.bins[:, :, :n_bins], spec.frame_hop, spec.fft_size, spec.sample_rate)
    spatial = normalize_ipd(ipd_map(crop, ref), freqs, variant, c)
    kind = FeatureKind.SALSA_LITE if variant == "lite" else FeatureKind.SALSA_IPD
    meta = {"feature": "salsa", "variant": variant, "ref_channel": ref, "n_bins": n_bins,
            "cutoff_hz": n_bins * spec.sample_rate / spec.fft_size, "c": c,
            "sign": "lite=-c*ipd/(2*pi*f); ipd=-ipd/(2*pi); ipd=arg(X_ref*conj(X_m))"}
    return stack_features([spectro, FeatureTensor(spatial, kind)], meta)

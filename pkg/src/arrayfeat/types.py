"""Containers passed between the extraction, simulation and evaluation stages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class FeatureKind(str, enum.Enum):
    LOG_MEL = "logmel"
    LOG_LIN = "loglin"
    GCC_PHAT = "gccphat"
    SALSA_IPD = "salsa-ipd"
    SALSA_LITE = "salsa-lite"
    BEAMFORMED = "beamformed"
    STACKED = "stacked"


@dataclass(frozen=True)
class MultichannelClip:
    """Synchronised PCM samples, shape (n_channels, n_samples).

    ``channel_mic_ids`` maps each row to a microphone id of the array geometry.
    """

    samples: np.ndarray
    sample_rate: float
    channel_mic_ids: tuple = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D (channels, samples), got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        ids = tuple(self.channel_mic_ids) if self.channel_mic_ids else tuple(range(samples.shape[0]))
        if len(ids) != samples.shape[0]:
            raise ValueError(f"{len(ids)} mic ids given for {samples.shape[0]} channels")
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate mic ids in {ids}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_mic_ids", ids)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def select(self, channels) -> "MultichannelClip":
        channels = list(channels)
        return MultichannelClip(self.samples[channels], self.sample_rate,
                                tuple(self.channel_mic_ids[c] for c in channels))


@dataclass(frozen=True)
class SpectralTensor:
    """One-sided complex STFT, ``bins[channel, frame, freq]``."""

    bins: np.ndarray
    frame_hop: int
    fft_size: int
    sample_rate: float

    @property
    def n_channels(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def n_freqs(self) -> int:
        return self.bins.shape[2]

    def frequencies(self) -> np.ndarray:
        """Bin centre frequencies in Hz (``k * sample_rate / fft_size``)."""
        return np.arange(self.n_freqs) * self.sample_rate / self.fft_size


@dataclass(frozen=True)
class FeatureTensor:
    """Real feature maps ``values[channel, frame, bin]`` with a kind tag."""

    values: np.ndarray
    kind: FeatureKind
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise ValueError(f"feature values must be 3-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values contain NaN or Inf")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", FeatureKind(self.kind))

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]


def stack_features(parts, meta=None) -> FeatureTensor:
    """Concatenate feature tensors along the channel axis."""
    values = np.concatenate([p.values for p in parts], axis=0)
    return FeatureTensor(values, FeatureKind.STACKED, dict(meta or {}))


@dataclass(frozen=True)
class FrameTrack:
    """Per video frame activity confidence and normalised horizontal position."""

    confidence: np.ndarray
    x_norm: np.ndarray

    def __post_init__(self):
        conf = np.clip(np.asarray(self.confidence, dtype=np.float64), 0.0, 1.0)
        x = np.clip(np.asarray(self.x_norm, dtype=np.float64), 0.0, 1.0)
        if conf.shape != x.shape or conf.ndim != 1:
            raise ValueError("confidence and x_norm must be 1-D arrays of equal length")
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "x_norm", x)

    def __len__(self):
        return self.confidence.shape[0]


@dataclass(frozen=True)
class GroundTruth:
    """Frame labels. ``x_norm`` is NaN on silent frames.

    ``available`` marks frames whose position label exists (the regression
    mask of the training loss); it defaults to ``active``.
    """

    active: np.ndarray
    x_norm: np.ndarray
    available: np.ndarray | None = None

    def __post_init__(self):
        active = np.asarray(self.active, dtype=bool)
        x = np.asarray(self.x_norm, dtype=np.float64).copy()
        if active.shape != x.shape or active.ndim != 1:
            raise ValueError("active and x_norm must be 1-D arrays of equal length")
        if np.any(np.isnan(x[active])):
            raise ValueError("x_norm must be defined on every active frame")
        x[~active] = np.nan
        avail = active.copy() if self.available is None else np.asarray(self.available, dtype=bool) & active
        if avail.shape != active.shape:
            raise ValueError("available mask has the wrong length")
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "x_norm", x)
        object.__setattr__(self, "available", avail)

    def __len__(self):
        return self.active.shape[0]

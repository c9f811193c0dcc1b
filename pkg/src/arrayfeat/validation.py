"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .types import MultichannelClip


def as_clips(X, sample_rate: float, min_channels: int = 1):
    """Normalise estimator input to a list of clips.

    Accepts a MultichannelClip, a list of clips, a (channels, samples) array
    or a (clips, channels, samples) batch. Returns ``(clips, batched)``.
    """
    if isinstance(X, MultichannelClip):
        clips, batched = [X], False
    elif isinstance(X, (list, tuple)) and X and all(isinstance(c, MultichannelClip) for c in X):
        clips, batched = list(X), True
    else:
        arr = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
        if arr.ndim == 2:
            clips, batched = [MultichannelClip(arr, sample_rate)], False
        elif arr.ndim == 3:
            clips, batched = [MultichannelClip(a, sample_rate) for a in arr], True
        else:
            raise ValueError(f"expected (channels, samples) or (clips, channels, samples), got shape {arr.shape}")
    for clip in clips:
        if clip.n_channels < min_channels:
            raise ValueError(f"need at least {min_channels} channels, got {clip.n_channels}")
        if clip.sample_rate != sample_rate:
            raise ValueError(f"clip sample rate {clip.sample_rate} Hz differs from {sample_rate} Hz")
    return clips, batched


def check_n_channels(clips, expected: int) -> None:
    for clip in clips:
        if clip.n_channels != expected:
            raise ValueError(f"estimator was fitted on {expected} channels, got {clip.n_channels}")


def check_mic_count(m: int, n_available: int) -> None:
    if not 1 <= m <= n_available:
        raise ValueError(f"--mics must be in [1, {n_available}] for this geometry, got {m}")

"""Classical active-speaker localiser: steered response power over an azimuth grid
plus an energy/coherence activity confidence, aggregated to the video frame rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .beamformer import LookDirectionBank, beamformer_features, sdb_weights
from .dsp import stft
from .gccphat import gcc_lags, lag_axis, pair_list
from .geometry import SPEED_OF_SOUND, ArrayGeometry, CameraModel, arrival_delays, azimuth_to_pixel, max_lag_samples
from .salsa import salsa_features
from .simulate import VIDEO_FPS, n_video_frames
from .types import FeatureKind, FeatureTensor, FrameTrack, MultichannelClip, SpectralTensor

BACKENDS = ("gcc", "salsa", "bf")


@dataclass(frozen=True)
class LocalizerParams:
    backend: str = "gcc"
    mode: str = "all"
    ref_channel: int = 0
    grid_step: float = 0.5
    fft_size: int = 512
    hop: int = 100
    salsa_variant: str = "lite"
    salsa_bins: int = 64
    bf_preset: str = "dirs15"
    bf_loading: float = 1e-2
    # confidence = sigmoid(coh_slope * (coherence - coh_offset)
    #                      + energy_slope * (min(dB above floor, energy_cap) - energy_offset))
    coh_slope: float = 100.0
    coh_offset: float = 0.03
    energy_slope: float = 0.3
    energy_offset: float = 3.0
    energy_cap: float = 20.0
    noise_percentile: float = 10.0
    min_level_db: float = -120.0
    # frames whose peak score is below coh_offset keep the last confident position
    hold_position: bool = True
    fps: float = VIDEO_FPS
    c: float = SPEED_OF_SOUND


def azimuth_grid(cam: CameraModel, step: float = 0.5) -> np.ndarray:
    half = cam.fov_h / 2
    n = int(np.floor(round(2 * half / step, 9)))
    return -half + step * np.arange(n + 1)


def pair_lag_table(positions: np.ndarray, pairs, grid, sample_rate: float, max_lag: int,
                   c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Integer lag of each pair at each grid azimuth, shape (P, G), clipped to +/-max_lag."""
    tau = arrival_delays(positions, np.asarray(grid, dtype=np.float64), c)  # (G, M)
    i, j = np.array(pairs).T
    lags = np.round((tau[:, j] - tau[:, i]).T * sample_rate).astype(int)
    return np.clip(lags, -max_lag, max_lag)


def gcc_bundle(spec: SpectralTensor, pairs, n_lag_bins: int) -> FeatureTensor:
    """Raw GCC-PHAT planes for ``pairs`` (no spectrogram channel), odd width."""
    lags = lag_axis(n_lag_bins)
    planes = np.stack([gcc_lags(spec, i, j, lags) for i, j in pairs])
    return FeatureTensor(planes, FeatureKind.GCC_PHAT, {"pairs": tuple(pairs), "first_lag": int(lags[0])})


def srp_map(gcc: FeatureTensor, positions: np.ndarray, grid, sample_rate: float,
            c: float = SPEED_OF_SOUND) -> np.ndarray:
    """``SRP(t, az) = sum_pairs GCC_pair(t, lag_pair(az))``, shape (T, G)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("azimuth grid is empty")
    pairs = gcc.meta["pairs"]
    if len(pairs) < 1:
        raise ValueError("need at least one microphone pair")
    first = gcc.meta["first_lag"]
    max_lag = min(-first, gcc.values.shape[2] - 1 + first)
    table = pair_lag_table(positions, pairs, grid, sample_rate, max_lag, c) - first
    out = np.zeros((gcc.values.shape[1], grid.size))
    for p in range(len(pairs)):
        out += gcc.values[p][:, table[p]]
    return out


def _resolve_positions(clip: MultichannelClip, geom: ArrayGeometry) -> np.ndarray:
    ids = list(clip.channel_mic_ids)
    if all(i in geom.ids for i in ids):
        return geom.positions(ids)
    if clip.n_channels > geom.n_mics:
        raise ValueError(f"clip has {clip.n_channels} channels, geometry only {geom.n_mics} mics")
    return geom.positions(geom.subset_order[:clip.n_channels])


def video_frame_index(n_stft_frames: int, hop: int, sample_rate: float, n_frames: int, fps: float) -> np.ndarray:
    idx = np.floor(np.arange(n_stft_frames) * hop * fps / sample_rate + 1e-9).astype(int)
    return np.minimum(idx, n_frames - 1)


def _average_frames(values: np.ndarray, index: np.ndarray, n_frames: int) -> np.ndarray:
    sums = np.zeros((n_frames,) + values.shape[1:])
    np.add.at(sums, index, values)
    counts = np.bincount(index, minlength=n_frames).astype(float)
    counts[counts == 0] = 1.0
    return sums / counts.reshape((-1,) + (1,) * (values.ndim - 1))


def frame_energy_db(clip: MultichannelClip, n_frames: int, fps: float) -> np.ndarray:
    """Mean-square level per video frame over all channels, in dB."""
    bounds = np.round(np.arange(n_frames + 1) * clip.sample_rate / fps).astype(int)
    bounds[-1] = clip.n_samples
    power = np.square(clip.samples).mean(axis=0)
    cums = np.concatenate([[0.0], np.cumsum(power)])
    lo, hi = bounds[:-1], np.maximum(bounds[1:], bounds[:-1] + 1)
    hi = np.minimum(hi, clip.n_samples)
    ms = (cums[hi] - cums[lo]) / np.maximum(hi - lo, 1)
    return 10 * np.log10(ms + 1e-20)


def _steered_scores(spec: SpectralTensor, positions, grid, params: LocalizerParams):
    """Per STFT frame score over candidate azimuths, normalised to [-1, 1]-ish."""
    fs = spec.sample_rate
    if params.backend == "gcc":
        pairs = pair_list(spec.n_channels, params.mode, params.ref_channel)
        d_max = float(np.max(np.linalg.norm(positions[:, None] - positions[None], axis=-1)))
        max_lag = max(1, max_lag_samples(d_max, 2 * float(np.max(np.abs(grid))), fs, params.c))
        gcc = gcc_bundle(spec, pairs, 2 * max_lag + 1)
        return srp_map(gcc, positions, grid, fs, params.c) / len(pairs), grid
    if params.backend == "salsa":
        feats = salsa_features(spec, params.ref_channel, params.salsa_variant, params.salsa_bins, params.c)
        spatial = feats.values[1:, :, 1:]
        freqs = spec.frequencies()[1:params.salsa_bins]
        tau = arrival_delays(positions, grid, params.c)  # (G, M)
        others = [m for m in range(spec.n_channels) if m != params.ref_channel]
        if params.salsa_variant == "lite":
            # expected path difference c (tau_ref - tau_m), metres
            expected = params.c * (tau[:, [params.ref_channel]] - tau[:, others])
            phase = 2 * np.pi * freqs / params.c
        else:
            expected = tau[:, [params.ref_channel]] - tau[:, others]
            phase = 2 * np.pi * np.ones_like(freqs)
            expected = expected[..., None] * freqs  # turns
        scores = np.empty((spec.n_frames, len(grid)))
        for g in range(len(grid)):
            e = expected[g][:, None, None] if expected.ndim == 2 else expected[g][:, None, :]
            resid = (spatial - e) * phase
            scores[:, g] = np.cos(resid).mean(axis=(0, 2))
        return scores, grid
    if params.backend == "bf":
        bank = LookDirectionBank.from_preset(params.bf_preset)
        w = sdb_weights(positions, bank, spec.fft_size, fs, params.bf_loading, c=params.c)
        power = np.exp(beamformer_features(spec, w).values).sum(axis=2).T  # (T, D)
        top = power.max(axis=1, keepdims=True)
        return (power - power.mean(axis=1, keepdims=True)) / np.maximum(top, 1e-30), np.asarray(bank.azimuths)
    raise ValueError(f"unknown backend {params.backend!r}; choose from {BACKENDS}")


def _hold_weak_frames(az: np.ndarray, strong: np.ndarray) -> np.ndarray:
    """Forward-fill positions of weak frames from the last strong one."""
    last = np.maximum.accumulate(np.where(strong, np.arange(len(az)), -1))
    return np.where(last >= 0, az[np.maximum(last, 0)], az)


def localize(clip: MultichannelClip, geom: ArrayGeometry, cam: CameraModel | None = None,
             params: LocalizerParams | None = None) -> FrameTrack:
    """Per video frame confidence and normalised x position for one clip."""
    cam = cam or CameraModel()
    params = params or LocalizerParams()
    if clip.n_channels < 2:
        raise ValueError("localisation needs at least two channels")
    positions = _resolve_positions(clip, geom)
    spec = stft(clip, params.fft_size, params.hop)
    grid = azimuth_grid(cam, params.grid_step)
    scores, dirs = _steered_scores(spec, positions, grid, params)

    n_frames = n_video_frames(clip.n_samples, clip.sample_rate, params.fps)
    index = video_frame_index(spec.n_frames, params.hop, clip.sample_rate, n_frames, params.fps)
    per_frame = _average_frames(scores, index, n_frames)
    peak = per_frame.max(axis=1)
    # centre of the tied maxima avoids biasing plateaus towards the grid start
    az = np.array([dirs[np.flatnonzero(row == row.max())].mean() for row in per_frame])
    if params.hold_position:
        az = _hold_weak_frames(az, peak >= params.coh_offset)
    az = np.clip(az, -cam.fov_h / 2, cam.fov_h / 2)
    x = azimuth_to_pixel(cam, az) / cam.image_width

    level = np.maximum(frame_energy_db(clip, n_frames, params.fps), params.min_level_db)
    above = np.clip(level - np.percentile(level, params.noise_percentile), 0.0, params.energy_cap)
    z = params.coh_slope * (peak - params.coh_offset) + params.energy_slope * (above - params.energy_offset)
    return FrameTrack(expit(z), np.atleast_1d(x))

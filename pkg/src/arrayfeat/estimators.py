"""scikit-learn compatible wrappers around the feature extractors and the localiser."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .beamformer import LookDirectionBank, beamformer_features, sdb_weights
from .dsp import log_mel_spectrogram, mel_filterbank, stft
from .gccphat import gcc_phat_features
from .geometry import CameraModel, default_geometry
from .localize import LocalizerParams, localize
from .metrics import EvalConfig, summarize
from .salsa import salsa_features
from .validation import as_clips, check_n_channels


class _ClipTransformer(TransformerMixin, BaseEstimator):
    """Shared fit/transform plumbing: fit records the channel count, transform
    maps each clip to a (C, T, F) feature array."""

    _min_channels = 1

    def fit(self, X, y=None):
        clips, _ = as_clips(X, self.sample_rate, self._min_channels)
        self.n_channels_in_ = clips[0].n_channels
        check_n_channels(clips, self.n_channels_in_)
        self._setup()
        return self

    def _setup(self):
        pass

    def transform(self, X):
        check_is_fitted(self, "n_channels_in_")
        clips, batched = as_clips(X, self.sample_rate, self._min_channels)
        check_n_channels(clips, self.n_channels_in_)
        out = [self._extract(stft(c, self.fft_size, self.hop)).values for c in clips]
        return np.stack(out) if batched else out[0]


class LogMelTransformer(_ClipTransformer):
    def __init__(self, channel=0, n_mels=64, fft_size=512, hop=100, sample_rate=48000.0):
        self.channel = channel
        self.n_mels = n_mels
        self.fft_size = fft_size
        self.hop = hop
        self.sample_rate = sample_rate

    def _setup(self):
        self.filterbank_ = mel_filterbank(self.n_mels, self.fft_size, self.sample_rate)

    def _extract(self, spec):
        return log_mel_spectrogram(spec, self.channel, self.filterbank_)


class GccPhatTransformer(_ClipTransformer):
    """Log-mel + GCC-PHAT planes; ``mode`` is ``"all"`` (every pair) or ``"ref"``."""

    _min_channels = 2

    def __init__(self, mode="all", ref_channel=0, n_lag_bins=64, max_lag=None,
                 fft_size=512, hop=100, sample_rate=48000.0):
        self.mode = mode
        self.ref_channel = ref_channel
        self.n_lag_bins = n_lag_bins
        self.max_lag = max_lag
        self.fft_size = fft_size
        self.hop = hop
        self.sample_rate = sample_rate

    def _setup(self):
        self.filterbank_ = mel_filterbank(self.n_lag_bins, self.fft_size, self.sample_rate)

    def _extract(self, spec):
        return gcc_phat_features(spec, self.mode, self.n_lag_bins, self.filterbank_,
                                 ref_channel=self.ref_channel, max_lag=self.max_lag)


class SalsaTransformer(_ClipTransformer):
    """Log-linear spectrogram + normalised IPD (``variant`` ``"lite"`` or ``"ipd"``)."""

    _min_channels = 2

    def __init__(self, variant="lite", ref_channel=0, n_bins=64, c=343.0,
                 fft_size=512, hop=100, sample_rate=48000.0):
        self.variant = variant
        self.ref_channel = ref_channel
        self.n_bins = n_bins
        self.c = c
        self.fft_size = fft_size
        self.hop = hop
        self.sample_rate = sample_rate

    def _extract(self, spec):
        return salsa_features(spec, self.ref_channel, self.variant, self.n_bins, self.c)


class BeamformerTransformer(_ClipTransformer):
    """Steered log-mel spectrograms; fit synthesises the super-directive weights."""

    def __init__(self, geometry=None, mic_ids=None, preset="dirs15", loading=1e-2, n_mels=64,
                 fft_size=512, hop=100, sample_rate=48000.0):
        self.geometry = geometry
        self.mic_ids = mic_ids
        self.preset = preset
        self.loading = loading
        self.n_mels = n_mels
        self.fft_size = fft_size
        self.hop = hop
        self.sample_rate = sample_rate

    def _setup(self):
        geom = self.geometry or default_geometry()
        ids = self.mic_ids or geom.subset_order[:self.n_channels_in_]
        if len(ids) != self.n_channels_in_:
            raise ValueError(f"{len(ids)} mic ids for {self.n_channels_in_} channels")
        self.weights_ = sdb_weights(geom, LookDirectionBank.from_preset(self.preset), self.fft_size,
                                    self.sample_rate, self.loading, mic_ids=ids)
        self.filterbank_ = mel_filterbank(self.n_mels, self.fft_size, self.sample_rate)

    def _extract(self, spec):
        return beamformer_features(spec, self.weights_, self.filterbank_)


class SrpLocalizer(BaseEstimator):
    """Steered-response-power speaker localiser.

    ``predict`` returns an (n_frames, 2) array of ``[confidence, x_norm]`` per
    video frame; ``score`` is F1 at the configured angular tolerance.
    """

    def __init__(self, geometry=None, camera=None, backend="gcc", mode="all", ref_channel=0,
                 grid_step=0.5, sample_rate=48000.0, tolerance_deg=2.0):
        self.geometry = geometry
        self.camera = camera
        self.backend = backend
        self.mode = mode
        self.ref_channel = ref_channel
        self.grid_step = grid_step
        self.sample_rate = sample_rate
        self.tolerance_deg = tolerance_deg

    def fit(self, X, y=None):
        clips, _ = as_clips(X, self.sample_rate, 2)
        self.geometry_ = self.geometry or default_geometry()
        self.camera_ = self.camera or CameraModel()
        self.n_channels_in_ = clips[0].n_channels
        if self.n_channels_in_ > self.geometry_.n_mics:
            raise ValueError(f"{self.n_channels_in_} channels for a {self.geometry_.n_mics}-mic geometry")
        self.params_ = LocalizerParams(backend=self.backend, mode=self.mode,
                                       ref_channel=self.ref_channel, grid_step=self.grid_step)
        return self

    def predict_tracks(self, X):
        check_is_fitted(self, "params_")
        clips, batched = as_clips(X, self.sample_rate, 2)
        check_n_channels(clips, self.n_channels_in_)
        tracks = [localize(c, self.geometry_, self.camera_, self.params_) for c in clips]
        return tracks if batched else tracks[0]

    def predict(self, X):
        tracks = self.predict_tracks(X)
        as_array = lambda t: np.column_stack([t.confidence, t.x_norm])
        return [as_array(t) for t in tracks] if isinstance(tracks, list) else as_array(tracks)

    def score(self, X, y):
        """Mean F1 over clips; ``y`` is a GroundTruth or a list of them."""
        tracks = self.predict_tracks(X)
        tracks = tracks if isinstance(tracks, list) else [tracks]
        labels = y if isinstance(y, (list, tuple)) else [y]
        cfg = EvalConfig(self.tolerance_deg, self.camera_)
        return float(np.mean([summarize(t, g, cfg).f1 for t, g in zip(tracks, labels)]))

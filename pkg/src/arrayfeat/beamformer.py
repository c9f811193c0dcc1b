"""Super-directive (diffuse-noise MVDR) beamformer weights and steered log-mel features."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .dsp import log_mel_spectrogram, mel_filterbank
from .geometry import SPEED_OF_SOUND, ArrayGeometry, Subset, arrival_delays
from .types import FeatureKind, FeatureTensor, SpectralTensor

DEFAULT_LOADING = 1e-2
_MAX_COND = 1e12

PRESETS = {
    "dirs3": (-20.0, 0.0, 20.0),
    "dirs7": (-45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0),
    "dirs15": (-45.0,) + tuple(float(a) for a in range(-30, 31, 5)) + (45.0,),
}


class SingularWeightsError(np.linalg.LinAlgError):
    """Raised when the loaded coherence matrix cannot be inverted reliably."""


@dataclass(frozen=True)
class LookDirectionBank:
    azimuths: tuple
    preset: str = "custom"

    @classmethod
    def from_preset(cls, name: str) -> "LookDirectionBank":
        key = name.lower().replace("-", "").replace("_", "")
        if key not in PRESETS:
            raise ValueError(f"unknown look-direction preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(PRESETS[key], key)

    def __len__(self):
        return len(self.azimuths)


@dataclass(frozen=True)
class BeamformerWeights:
    """``w[direction, freq, mic]``; applied as ``Y = sum_m conj(w) X_m``."""

    w: np.ndarray
    azimuths: tuple
    fingerprint: str
    loading: float
    fft_size: int
    sample_rate: float

    @property
    def n_directions(self) -> int:
        return self.w.shape[0]

    @property
    def n_mics(self) -> int:
        return self.w.shape[2]


def _mic_positions(geom, mic_ids=None) -> np.ndarray:
    if isinstance(geom, Subset):
        raise TypeError("pass the ArrayGeometry together with subset.mic_ids")
    if isinstance(geom, ArrayGeometry):
        return geom.positions(mic_ids)
    return np.atleast_2d(np.asarray(geom, dtype=np.float64))


def steering_vectors(positions: np.ndarray, azimuths, freqs, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Far-field steering vectors ``exp(-j 2 pi f tau_m)``, shape (D, F, M)."""
    tau = arrival_delays(positions, np.asarray(azimuths, dtype=np.float64), c)
    return np.exp(-2j * np.pi * freqs[None, :, None] * tau[:, None, :])


def diffuse_coherence(positions: np.ndarray, freqs, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Spherically isotropic coherence ``sinc(2 pi f d / c)`` (unnormalised sinc), shape (F, M, M)."""
    dist = np.linalg.norm(positions[:, None] - positions[None], axis=-1)
    return np.sinc(2.0 * freqs[:, None, None] * dist[None] / c)


def weights_fingerprint(positions: np.ndarray, azimuths, fft_size, sample_rate, loading, c) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(positions, dtype="<f8").tobytes())
    h.update(np.asarray(azimuths, dtype="<f8").tobytes())
    h.update(f"{fft_size}|{sample_rate!r}|{loading!r}|{c!r}".encode())
    return h.hexdigest()


def sdb_weights(geom, bank: LookDirectionBank, fft_size: int = 512, sample_rate: float = 48000.0,
                loading: float = DEFAULT_LOADING, mic_ids=None, c: float = SPEED_OF_SOUND) -> BeamformerWeights:
    """Per-bin ``w = (G + eps I)^-1 d / (d^H (G + eps I)^-1 d)`` with G the diffuse coherence.

    ``geom`` is an ArrayGeometry (optionally restricted to ``mic_ids``) or an
    (M, 3) position array.
    """
    if loading < 0:
        raise ValueError("loading must be >= 0")
    positions = _mic_positions(geom, mic_ids)
    if len(positions) < 1:
        raise ValueError("need at least one microphone")
    if len(bank) < 1:
        raise ValueError("look-direction bank is empty")
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    n_mics = len(positions)
    steer = steering_vectors(positions, bank.azimuths, freqs, c)
    gamma = diffuse_coherence(positions, freqs, c) + loading * np.eye(n_mics)
    cond = np.linalg.cond(gamma)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > _MAX_COND))
    if bad.size:
        raise SingularWeightsError(
            f"coherence matrix singular at {bad.size} bins (first at {freqs[bad[0]]:.1f} Hz, "
            f"condition {cond[bad[0]]:.3g}) with loading {loading}")
    # solve for all directions at once: (F, M, M) @ (F, M, D)
    sol = np.linalg.solve(gamma, np.transpose(steer, (1, 2, 0)))
    sol = np.transpose(sol, (2, 0, 1))
    norm = np.einsum("dfm,dfm->df", np.conj(steer), sol)
    w = sol / np.conj(norm)[..., None]
    fp = weights_fingerprint(positions, bank.azimuths, fft_size, sample_rate, loading, c)
    return BeamformerWeights(w, tuple(bank.azimuths), fp, loading, fft_size, sample_rate)


def distortionless_response(weights: BeamformerWeights, positions: np.ndarray, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """``w^H d`` per (direction, bin); equals 1 for a correct design."""
    freqs = np.arange(weights.w.shape[1]) * weights.sample_rate / weights.fft_size
    steer = steering_vectors(positions, weights.azimuths, freqs, c)
    return np.einsum("dfm,dfm->df", np.conj(weights.w), steer)


def steer(spec: SpectralTensor, weights: BeamformerWeights) -> SpectralTensor:
    """``Y_d(t, f) = sum_m conj(w[d, f, m]) X_m(t, f)``; output channels are directions."""
    if spec.n_channels != weights.n_mics:
        raise ValueError(f"weights expect {weights.n_mics} mics, spectrum has {spec.n_channels}")
    if spec.n_freqs != weights.w.shape[1]:
        raise ValueError(f"weights have {weights.w.shape[1]} bins, spectrum has {spec.n_freqs}")
    out = np.einsum("dfm,mtf->dtf", np.conj(weights.w), spec.bins)
    return SpectralTensor(out, spec.frame_hop, spec.fft_size, spec.sample_rate)


def beamformer_features(spec: SpectralTensor, weights: BeamformerWeights, fb: np.ndarray | None = None) -> FeatureTensor:
    """Log-mel spectrogram of each steered output, one channel per look direction."""
    if fb is None:
        fb = mel_filterbank(64, spec.fft_size, spec.sample_rate)
    steered = steer(spec, weights)
    planes = [log_mel_spectrogram(steered, d, fb).values[0] for d in range(steered.n_channels)]
    meta = {"feature": "bf", "azimuths": ",".join(f"{a:g}" for a in weights.azimuths),
            "loading": weights.loading, "fingerprint": weights.fingerprint}
    return FeatureTensor(np.stack(planes), FeatureKind.BEAMFORMED, meta)

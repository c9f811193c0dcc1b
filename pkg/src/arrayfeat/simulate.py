"""Far-field scene simulator producing multichannel clips with frame labels.

Each microphone receives the source through a windowed-sinc fractional delay
given by the plane-wave arrival time; independent pink noise per channel is
mixed in at a clip-wide SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import chirp as _chirp

from .dsp import mix_at_snr, pink_noise
from .geometry import SPEED_OF_SOUND, ArrayGeometry, CameraModel, arrival_delays, azimuth_to_pixel
from .types import GroundTruth, MultichannelClip

VIDEO_FPS = 30.0
SOURCE_KINDS = ("white-burst", "speech-shaped-noise", "chirp")
SOURCE_RMS = 0.1
FD_TAPS = 64
FD_BETA = 8.0


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    azimuth: float
    kind: str = "speech-shaped-noise"


@dataclass(frozen=True)
class SceneSpec:
    segments: tuple = ()
    snr_db: float | None = None
    seed: int = 0
    duration: float = 2.0

    def to_text(self) -> str:
        lines = [f"duration={self.duration!r}", f"seed={self.seed}",
                 f"snr_db={'none' if self.snr_db is None else repr(self.snr_db)}"]
        for s in self.segments:
            lines.append(f"segment={s.start!r},{s.end!r},{s.azimuth!r},{s.kind}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SceneSpec":
        kw, segs = {}, []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            if key == "segment":
                a, b, az, kind = value.split(",")
                segs.append(Segment(float(a), float(b), float(az), kind))
            elif key == "snr_db":
                kw[key] = None if value == "none" else float(value)
            elif key == "seed":
                kw[key] = int(value)
            elif key == "duration":
                kw[key] = float(value)
        return cls(tuple(segs), **kw)


def n_video_frames(n_samples: int, sample_rate: float, fps: float = VIDEO_FPS) -> int:
    return int(math.ceil(round(n_samples * fps / sample_rate, 9)))


def fractional_delay_filter(frac: float, n_taps: int = FD_TAPS, beta: float = FD_BETA) -> np.ndarray:
    """Kaiser-windowed sinc taps for lags ``-(n/2 - 1) .. n/2`` delaying by ``frac`` in [0, 1)."""
    k = np.arange(n_taps) - (n_taps // 2 - 1)
    u = (k - frac) / (n_taps / 2)
    win = np.i0(beta * np.sqrt(np.clip(1.0 - u ** 2, 0.0, None))) / np.i0(beta)
    return np.sinc(k - frac) * win


def fractional_delay(x: np.ndarray, delay: float, n_taps: int = FD_TAPS, beta: float = FD_BETA) -> np.ndarray:
    """Delay ``x`` by ``delay`` samples (any sign), keeping its length; zeros shift in."""
    x = np.asarray(x, dtype=np.float64)
    whole = math.floor(delay)
    h = fractional_delay_filter(delay - whole, n_taps, beta)
    full = np.convolve(x, h)
    idx = np.arange(len(x)) - whole + (n_taps // 2 - 1)
    ok = (idx >= 0) & (idx < len(full))
    y = np.zeros(len(x))
    y[ok] = full[idx[ok]]
    return y


def _shape_spectrum(white: np.ndarray, gain: np.ndarray) -> np.ndarray:
    n = len(white)
    return np.fft.irfft(np.fft.rfft(white) * gain, n)


def syllabic_envelope(n: int, sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Train of Hann-shaped syllables (80-300 ms) with short pauses and levels
    spread over 30 dB, mimicking the level fluctuation of running speech."""
    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.05) * sample_rate)
    while pos < n:
        length = int(rng.uniform(0.08, 0.30) * sample_rate)
        level = 10.0 ** (-rng.uniform(0.0, 30.0) / 20.0)
        seg = env[pos:pos + length]
        seg += level * np.hanning(length)[:seg.size]
        pos += length + int(rng.uniform(0.0, 0.12) * sample_rate)
    return env


def source_signal(kind: str, duration: float, seed: int, sample_rate: float = 48000.0) -> np.ndarray:
    """Deterministic test source with RMS ``SOURCE_RMS``.

    ``speech-shaped-noise`` is flat below 500 Hz and falls 6 dB/octave above,
    with a syllabic level envelope;
    ``chirp`` repeats 0.25 s logarithmic sweeps from 100 Hz to 6 kHz.
    """
    if kind not in SOURCE_KINDS:
        raise ValueError(f"unknown source kind {kind!r}; choose from {SOURCE_KINDS}")
    n = int(round(duration * sample_rate))
    if n < 1:
        raise ValueError("duration too short")
    rng = np.random.default_rng(seed)
    if kind == "white-burst":
        x = rng.standard_normal(n)
    elif kind == "speech-shaped-noise":
        f = np.fft.rfftfreq(n, 1.0 / sample_rate)
        gain = np.where(f <= 500.0, 1.0, 500.0 / np.maximum(f, 500.0))
        x = _shape_spectrum(rng.standard_normal(n), gain) * syllabic_envelope(n, sample_rate, rng)
    else:
        sweep = 0.25
        t = (np.arange(n) / sample_rate) % sweep
        x = _chirp(t, f0=100.0, t1=sweep, f1=6000.0, method="logarithmic", phi=rng.uniform(0, 360))
    rms = np.sqrt(np.mean(x ** 2))
    return SOURCE_RMS * x / rms if rms > 0 else x


def validate_scene(scene: SceneSpec, cam: CameraModel) -> None:
    if scene.duration <= 0:
        raise ValueError("scene duration must be positive")
    spans = sorted(scene.segments, key=lambda s: s.start)
    for s in spans:
        if not 0 <= s.start < s.end <= scene.duration + 1e-12:
            raise ValueError(f"bad segment bounds {s.start}..{s.end} for duration {scene.duration}")
        if abs(s.azimuth) > cam.fov_h / 2:
            raise ValueError(f"azimuth {s.azimuth} outside the {cam.fov_h} degree field of view")
    for a, b in zip(spans, spans[1:]):
        if b.start < a.end:
            raise ValueError("segments overlap")


def scene_labels(scene: SceneSpec, cam: CameraModel, n_frames: int, fps: float = VIDEO_FPS) -> GroundTruth:
    """Segment spans quantised to video frames: floor at the start, ceil at the end."""
    active = np.zeros(n_frames, dtype=bool)
    x = np.full(n_frames, np.nan)
    for s in scene.segments:
        a = int(math.floor(round(s.start * fps, 9)))
        b = min(n_frames, int(math.ceil(round(s.end * fps, 9))))
        active[a:b] = True
        x[a:b] = azimuth_to_pixel(cam, s.azimuth) / cam.image_width
    return GroundTruth(active, x)


def render_clean(scene: SceneSpec, geom: ArrayGeometry, cam: CameraModel, sample_rate: float = 48000.0,
                 mic_ids=None, c: float = SPEED_OF_SOUND) -> MultichannelClip:
    validate_scene(scene, cam)
    ids = tuple(geom.ids if mic_ids is None else (str(i) for i in mic_ids))
    positions = geom.positions(ids)
    n = int(round(scene.duration * sample_rate))
    out = np.zeros((len(ids), n))
    seeds = np.random.SeedSequence(scene.seed).spawn(len(scene.segments) + 1)[1:]
    for seg, ss in zip(scene.segments, seeds):
        a, b = int(round(seg.start * sample_rate)), int(round(seg.end * sample_rate))
        track = np.zeros(n)
        track[a:b] = source_signal(seg.kind, (b - a) / sample_rate, int(ss.generate_state(1)[0]), sample_rate)
        delays = arrival_delays(positions, seg.azimuth, c) * sample_rate
        for m, d in enumerate(delays):
            out[m] += fractional_delay(track, d)
    return MultichannelClip(out, sample_rate, ids)


def scene_noise(scene: SceneSpec, n_channels: int, n_samples: int, sample_rate: float = 48000.0) -> np.ndarray:
    """Independent pink noise per channel, seeded from the scene seed."""
    ss = np.random.SeedSequence(scene.seed).spawn(1)[0]
    seeds = ss.generate_state(n_channels)
    return np.stack([pink_noise(n_samples, int(s), sample_rate) for s in seeds])


def render_scene(scene: SceneSpec, geom: ArrayGeometry, cam: CameraModel | None = None,
                 sample_rate: float = 48000.0, mic_ids=None, c: float = SPEED_OF_SOUND):
    """Render ``scene`` for every mic (or ``mic_ids``); returns ``(clip, labels)``."""
    cam = cam or CameraModel()
    clip = render_clean(scene, geom, cam, sample_rate, mic_ids, c)
    if scene.snr_db is not None:
        noise = scene_noise(scene, clip.n_channels, clip.n_samples, sample_rate)
        clip = mix_at_snr(clip, noise, scene.snr_db)
    labels = scene_labels(scene, cam, n_video_frames(clip.n_samples, sample_rate))
    return clip, labels


def random_scene(seed: int, duration: float = 2.0, snr_db: float | None = None,
                 max_azimuth: float = 25.0, kind: str = "speech-shaped-noise") -> SceneSpec:
    """One or two non-overlapping talk spurts with silence around them."""
    rng = np.random.default_rng(seed)
    n_seg = int(rng.integers(1, 3))
    bounds = np.sort(rng.uniform(0.1, duration - 0.1, 2 * n_seg))
    segs = []
    for k in range(n_seg):
        a, b = bounds[2 * k], bounds[2 * k + 1]
        if b - a < 0.2:
            b = min(duration, a + 0.2)
        if segs and a < segs[-1].end:
            continue
        az = float(np.round(rng.uniform(-max_azimuth, max_azimuth), 2))
        segs.append(Segment(float(np.round(a, 3)), float(np.round(b, 3)), az, kind))
    return SceneSpec(tuple(segs), snr_db, seed, duration)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import welch

from arrayfeat.dsp import LOG_FLOOR, signal_power, stft
from arrayfeat.gccphat import gcc_phat_pair, tdoa_argmax
from arrayfeat.geometry import SPEED_OF_SOUND, CameraModel, arrival_delays
from arrayfeat.simulate import (SceneSpec, Segment, fractional_delay, random_scene, render_clean,
                                render_scene, scene_labels, source_signal)

FS = 48000.0


def one_source(az, kind="white-burst", snr=None, duration=0.5, seed=5):
    return SceneSpec((Segment(0.0, duration, az, kind),), snr, seed, duration)


def test_broadside_symmetric_pair_identical(geom, cam):
    # mics 12 and 16 sit symmetric about the array centre
    clip, _ = render_scene(one_source(0.0), geom, cam, mic_ids=(12, 16))
    assert np.max(np.abs(clip.samples[0] - clip.samples[1])) < 1e-4


@pytest.mark.parametrize("theta", [-25.0, -8.0, 4.0, 15.0])
def test_gcc_recovers_rendered_tdoa(geom, cam, theta):
    clip, _ = render_scene(one_source(theta, snr=20.0), geom, cam, mic_ids=(1, 11))
    d = geom.positions((11,))[0, 0] - geom.positions((1,))[0, 0]
    exact = d * math.sin(math.radians(theta)) / SPEED_OF_SOUND * FS
    assert abs(abs(exact % 1) - 0.5) > 0.1  # keep clear of rounding ties
    expected = round(exact)
    gcc = gcc_phat_pair(stft(clip), 1, 0, 61)
    lags = [tdoa_argmax(gcc, t) for t in range(10, gcc.shape[1] - 10)]
    assert np.median(lags) == expected


def test_measured_snr_zero_db(geom, cam):
    scene = one_source(-10.0, "speech-shaped-noise", snr=0.0, duration=1.0)
    clean = render_clean(scene, geom, cam)
    noisy, _ = render_scene(scene, geom, cam)
    noise = noisy.samples - clean.samples
    snr = 10 * math.log10(signal_power(clean.samples) / signal_power(noise))
    assert abs(snr) < 1e-6


def test_noise_is_independent_across_channels(geom, cam):
    scene = SceneSpec((), 10.0, 4, 1.0)
    noisy, _ = render_scene(SceneSpec((Segment(0.0, 1.0, 0.0),), 10.0, 4, 1.0), geom, cam)
    clean = render_clean(SceneSpec((Segment(0.0, 1.0, 0.0),), 10.0, 4, 1.0), geom, cam)
    noise = noisy.samples - clean.samples
    # pink noise has few effective degrees of freedom per second, so allow
    # the sampling spread of 120 pairwise correlations
    corr = np.corrcoef(noise)[np.triu_indices(16, 1)]
    assert np.max(np.abs(corr)) < 0.15
    assert np.mean(np.abs(corr)) < 0.05
    assert scene.snr_db == 10.0


def test_render_is_deterministic(geom, cam):
    scene = random_scene(17, snr_db=10.0)
    a, la = render_scene(scene, geom, cam)
    b, lb = render_scene(scene, geom, cam)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(la.active, lb.active)
    assert np.array_equal(la.x_norm, lb.x_norm, equal_nan=True)


def test_scene_text_roundtrip():
    scene = random_scene(3, snr_db=20.0)
    assert SceneSpec.from_text(scene.to_text()) == scene
    clean = SceneSpec((Segment(0.1, 0.4, -3.5, "chirp"),), None, 2, 1.0)
    assert SceneSpec.from_text(clean.to_text()) == clean


@pytest.mark.parametrize("kind", ["white-burst", "speech-shaped-noise", "chirp"])
def test_source_deterministic_and_scaled(kind):
    a = source_signal(kind, 0.5, 11)
    assert np.array_equal(a, source_signal(kind, 0.5, 11))
    assert not np.array_equal(a, source_signal(kind, 0.5, 12))
    assert math.isclose(np.sqrt(np.mean(a ** 2)), 0.1, rel_tol=1e-9)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown source kind"):
        source_signal("violin", 1.0, 0)


def test_chirp_covers_every_salsa_bin():
    from arrayfeat.types import MultichannelClip

    x = source_signal("chirp", 1.0, 0)
    power = np.abs(stft(MultichannelClip(x[None], FS)).bins[0]) ** 2
    peak_db = 10 * np.log10(np.max(power[:, 1:64], axis=0))
    assert np.all(peak_db >= 10 * math.log10(LOG_FLOOR) + 20)
    # stronger: every bin is within 30 dB of the loudest one at some frame
    assert np.all(peak_db >= peak_db.max() - 30)


def test_speech_shaped_slope():
    x = source_signal("speech-shaped-noise", 20.0, 1)
    f, pxx = welch(x, FS, nperseg=4096)
    band = (f >= 500) & (f <= 6000)
    slope = np.polyfit(np.log2(f[band]), 10 * np.log10(pxx[band]), 1)[0]
    assert -7.0 <= slope <= -5.0


def test_label_quantisation(cam):
    scene = SceneSpec((Segment(0.31, 0.52, 10.0),), None, 0, 1.0)
    gt = scene_labels(scene, cam, 30)
    assert np.flatnonzero(gt.active).tolist() == list(range(9, 16))
    assert np.all(np.isnan(gt.x_norm[~gt.active]))
    assert np.allclose(gt.x_norm[gt.active], 0.5 + 10.0 / 55.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.0, 2.0), st.floats(0.01, 0.5)), min_size=1, max_size=4),
       st.floats(-27.5, 27.5))
def test_labels_match_segment_spans(spans, az):
    cam = CameraModel()
    segs, t = [], 0.0
    for gap, length in spans:
        start = t + gap
        if start + length > 6.0:
            break
        segs.append(Segment(start, start + length, az))
        t = start + length
    scene = SceneSpec(tuple(segs), None, 0, 6.0)
    gt = scene_labels(scene, cam, 180)
    expected = np.zeros(180, bool)
    for s in segs:
        expected[math.floor(round(s.start * 30, 9)):math.ceil(round(s.end * 30, 9))] = True
    assert np.array_equal(gt.active, expected)
    assert np.all(np.isfinite(gt.x_norm[gt.active])) and np.all(np.isnan(gt.x_norm[~gt.active]))


@pytest.mark.parametrize("delay", [0.0, 0.37, 3.5, -7.81, 12.25])
def test_fractional_delay_matches_ideal(delay):
    n = 8192
    rng = np.random.default_rng(1)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / FS)
    spec[f > 16000] = 0
    x = np.fft.irfft(spec, n)
    ideal = np.fft.irfft(spec * np.exp(-2j * np.pi * f * delay / FS), n)
    got = fractional_delay(x, delay)
    inner = slice(100, n - 100)
    err = np.sqrt(np.mean((got[inner] - ideal[inner]) ** 2) / np.mean(ideal[inner] ** 2))
    assert err < 1e-3


def _phase_delay(a, b):
    """Delay of ``b`` relative to ``a`` in samples from the cross-spectrum phase slope."""
    f = np.fft.rfftfreq(len(a), 1 / FS)
    cross = np.fft.rfft(a) * np.conj(np.fft.rfft(b))
    band = (f > 100) & (f < 12000)
    phase = np.unwrap(np.angle(cross[band]))
    return np.polyfit(2 * np.pi * f[band] / FS, phase, 1)[0]


@pytest.mark.parametrize("theta", [-27.5, 13.0])
def test_pairwise_tdoa_consistency(geom, cam, theta):
    scene = SceneSpec((Segment(0.0, 0.25, theta, "white-burst"),), None, 8, 0.25)
    clip = render_clean(scene, geom, cam)
    ideal = arrival_delays(geom.positions(), theta) * FS
    for i, j in itertools.combinations(range(16), 2):
        measured = _phase_delay(clip.samples[i], clip.samples[j])
        assert abs(measured - (ideal[j] - ideal[i])) < 0.25


def test_scene_errors(geom, cam):
    with pytest.raises(ValueError, match="field of view"):
        render_scene(one_source(30.0), geom, cam)
    with pytest.raises(ValueError, match="bounds"):
        render_scene(SceneSpec((Segment(0.4, 0.2, 0.0),), None, 0, 1.0), geom, cam)
    with pytest.raises(ValueError, match="bounds"):
        render_scene(SceneSpec((Segment(0.5, 1.5, 0.0),), None, 0, 1.0), geom, cam)
    with pytest.raises(ValueError, match="overlap"):
        render_scene(SceneSpec((Segment(0.0, 0.5, 0.0), Segment(0.4, 0.8, 5.0)), None, 0, 1.0), geom, cam)


def test_random_scene_is_valid(cam):
    from arrayfeat.simulate import validate_scene

    for seed in range(40):
        scene = random_scene(seed)
        validate_scene(scene, cam)
        assert all(abs(s.azimuth) <= 25 for s in scene.segments)
        assert 1 <= len(scene.segments) <= 2

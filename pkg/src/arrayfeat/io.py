"""File formats: WAV, AFT1 feature tensors, SDBW weight caches, label/prediction CSVs.

All writers go through a temporary file and an atomic rename so a failure
never leaves a partial artifact behind.
"""

from __future__ import annotations

import contextlib
import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .beamformer import BeamformerWeights
from .types import FeatureKind, FeatureTensor, FrameTrack, GroundTruth, MultichannelClip

AFT_MAGIC = b"AFT1"
SDBW_MAGIC = b"SDBW"


class FormatError(ValueError):
    pass


@contextlib.contextmanager
def atomic_write(path, mode="wb"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def read_wav(path, expected_rate: float | None = None, mic_ids=None) -> MultichannelClip:
    """PCM 16/24/32-bit integer or float WAV as a clip scaled to [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if expected_rate is not None and rate != expected_rate:
        raise FormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        # scipy left-aligns 24-bit samples into int32
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    x = np.atleast_2d(x.T) if x.ndim == 2 else x[None, :]
    return MultichannelClip(x, float(rate), tuple(mic_ids) if mic_ids else ())


def write_wav(path, clip: MultichannelClip) -> None:
    """32-bit float WAV, one channel per clip row."""
    buf = io.BytesIO()
    wavfile.write(buf, int(round(clip.sample_rate)), clip.samples.T.astype("<f4"))
    with atomic_write(path) as fh:
        fh.write(buf.getvalue())


def format_meta(meta: dict) -> str:
    lines = []
    for key in sorted(meta):
        value = str(meta[key])
        if "\n" in value or "=" in key:
            raise FormatError(f"metadata entry {key!r} cannot be written as key=value")
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def parse_meta(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key] = value
    return out


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def write_features(path, feats: FeatureTensor, extra_meta: dict | None = None) -> None:
    """``AFT1`` + little-endian u32 (C, T, F) + float32 values in C order, plus a sidecar."""
    values = np.ascontiguousarray(feats.values, dtype="<f4")
    meta = {"kind": feats.kind.value, **feats.meta, **(extra_meta or {})}
    with atomic_write(path) as fh:
        fh.write(AFT_MAGIC)
        fh.write(struct.pack("<3I", *values.shape))
        fh.write(values.tobytes())
    with atomic_write(sidecar_path(path), "w") as fh:
        fh.write(format_meta(meta))


def read_features(path) -> FeatureTensor:
    raw = Path(path).read_bytes()
    if raw[:4] != AFT_MAGIC:
        raise FormatError(f"{path}: not an AFT1 file")
    shape = struct.unpack("<3I", raw[4:16])
    n = int(np.prod(shape))
    if len(raw) != 16 + 4 * n:
        raise FormatError(f"{path}: expected {n} values, file holds {(len(raw) - 16) // 4}")
    values = np.frombuffer(raw, dtype="<f4", offset=16).reshape(shape).astype(np.float32)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = parse_meta(side.read_text(encoding="utf-8"))
    kind = FeatureKind(meta.pop("kind", FeatureKind.STACKED.value))
    return FeatureTensor(values, kind, meta)


def write_weights(path, weights: BeamformerWeights) -> None:
    """``SDBW`` + u32 (D, F, M) + 64-byte hex geometry fingerprint + interleaved float32 re/im."""
    w = weights.w
    inter = np.empty(w.shape + (2,), dtype="<f4")
    inter[..., 0], inter[..., 1] = w.real, w.imag
    header = {"azimuths": ",".join(repr(a) for a in weights.azimuths), "loading": repr(weights.loading),
              "fft_size": weights.fft_size, "sample_rate": repr(weights.sample_rate)}
    with atomic_write(path) as fh:
        fh.write(SDBW_MAGIC)
        fh.write(struct.pack("<3I", *w.shape))
        fh.write(weights.fingerprint.encode("ascii").ljust(64, b"\0"))
        fh.write(inter.tobytes())
    with atomic_write(sidecar_path(path), "w") as fh:
        fh.write(format_meta(header))


def read_weights(path, expected_fingerprint: str | None = None) -> BeamformerWeights:
    """Load cached weights; raises FormatError when the fingerprint does not match."""
    raw = Path(path).read_bytes()
    if raw[:4] != SDBW_MAGIC:
        raise FormatError(f"{path}: not an SDBW file")
    shape = struct.unpack("<3I", raw[4:16])
    fingerprint = raw[16:80].rstrip(b"\0").decode("ascii")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FormatError(f"{path}: weights were computed for a different geometry/configuration")
    n = int(np.prod(shape)) * 2
    if len(raw) != 80 + 4 * n:
        raise FormatError(f"{path}: truncated weight data")
    inter = np.frombuffer(raw, dtype="<f4", offset=80).reshape(shape + (2,))
    w = inter[..., 0].astype(np.complex128) + 1j * inter[..., 1]
    meta = parse_meta(sidecar_path(path).read_text(encoding="utf-8")) if sidecar_path(path).exists() else {}
    azimuths = tuple(float(a) for a in meta["azimuths"].split(",")) if "azimuths" in meta else tuple(range(shape[0]))
    return BeamformerWeights(w, azimuths, fingerprint, float(meta.get("loading", "nan")),
                             int(meta.get("fft_size", 2 * (shape[1] - 1))), float(meta.get("sample_rate", "nan")))


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def write_labels(path, gt: GroundTruth) -> None:
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "active", "x_norm"])
        for i, (a, x) in enumerate(zip(gt.active, gt.x_norm)):
            w.writerow([i, int(a), _fmt(x)])


def write_predictions(path, track: FrameTrack) -> None:
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "confidence", "x_norm"])
        for i, (c, x) in enumerate(zip(track.confidence, track.x_norm)):
            w.writerow([i, repr(float(c)), repr(float(x))])


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != header:
        raise FormatError(f"{path}: expected header {','.join(header)}")
    body = [r for r in rows[1:] if r]
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise FormatError(f"{path}: row {k + 2} has {len(r)} fields")
        if int(r[0]) != k:
            raise FormatError(f"{path}: frames must be numbered 0..n-1, row {k + 2} says {r[0]}")
    return body


def read_labels(path) -> GroundTruth:
    body = _read_rows(path, ["frame", "active", "x_norm"])
    try:
        active = np.array([int(r[1]) for r in body], dtype=bool)
        x = np.array([float(r[2]) if r[2].strip() else np.nan for r in body])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return GroundTruth(active, x)


def read_predictions(path) -> FrameTrack:
    body = _read_rows(path, ["frame", "confidence", "x_norm"])
    try:
        conf = np.array([float(r[1]) for r in body])
        x = np.array([float(r[2]) for r in body])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if np.any(~np.isfinite(conf)) or np.any(~np.isfinite(x)):
        raise FormatError(f"{path}: confidence and x_norm must be finite")
    return FrameTrack(conf, x)


def write_eval(path, result, curve_path=None) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(format_meta(result.as_dict()))
    if curve_path is not None:
        with atomic_write(curve_path, "w") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "precision", "recall"])
            w.writerows([[repr(t), repr(p), repr(r)] for t, p, r in result.pr_curve])

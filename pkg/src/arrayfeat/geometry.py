"""Microphone array geometry, camera model and lag-budget arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

SPEED_OF_SOUND = 343.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Mic:
    id: str
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphones in metres: x lateral (+right), y towards the scene, z up."""

    mics: tuple
    subset_order: tuple
    name: str = ""

    def __post_init__(self):
        mics = tuple(self.mics)
        if not mics:
            raise GeometryError("geometry needs at least one microphone")
        ids = [m.id for m in mics]
        seen = set()
        for i in ids:
            if i in seen:
                raise GeometryError(f"duplicate microphone id {i!r}")
            seen.add(i)
        order = tuple(self.subset_order) if self.subset_order else tuple(ids)
        if sorted(order) != sorted(ids):
            raise GeometryError("subset_order must be a permutation of the microphone ids")
        object.__setattr__(self, "mics", mics)
        object.__setattr__(self, "subset_order", order)

    @property
    def ids(self) -> list:
        return [m.id for m in self.mics]

    @property
    def n_mics(self) -> int:
        return len(self.mics)

    def positions(self, ids=None) -> np.ndarray:
        """(n, 3) coordinates, in ``ids`` order (default: file order)."""
        lookup = {m.id: m for m in self.mics}
        ids = self.ids if ids is None else [str(i) for i in ids]
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise GeometryError(f"unknown microphone id(s) {', '.join(missing)}")
        return np.array([[lookup[i].x, lookup[i].y, lookup[i].z] for i in ids], dtype=np.float64)

    def d_max(self, ids=None) -> float:
        p = self.positions(ids)
        if len(p) < 2:
            return 0.0
        return float(np.max(np.linalg.norm(p[:, None] - p[None], axis=-1)))

    def fingerprint(self) -> str:
        import hashlib

        text = ";".join(f"{m.id}:{m.x:.9f},{m.y:.9f},{m.z:.9f}" for m in self.mics)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class CameraModel:
    fov_h: float = 55.0
    image_width: int = 2448

    def __post_init__(self):
        if not 0 < self.fov_h < 180:
            raise ValueError(f"fov_h must be in (0, 180) degrees, got {self.fov_h}")
        if self.image_width < 1:
            raise ValueError("image_width must be >= 1")


@dataclass(frozen=True)
class Subset:
    mic_ids: tuple
    aperture_h: float
    aperture_v: float


def parse_geometry(text: str, name: str = "") -> ArrayGeometry:
    mics, order = [], ()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] == "mic":
            if len(fields) != 5:
                raise GeometryError(f"line {lineno}: expected 'mic <id> <x> <y> <z>'")
            try:
                mics.append(Mic(fields[1], *map(float, fields[2:])))
            except ValueError as exc:
                raise GeometryError(f"line {lineno}: {exc}") from None
        elif fields[0] == "subset_order":
            order = tuple(fields[1:])
        else:
            raise GeometryError(f"line {lineno}: unknown directive {fields[0]!r}")
    return ArrayGeometry(tuple(mics), order, name)


def load_geometry(path=None) -> ArrayGeometry:
    """Read a geometry file; ``None`` loads the bundled AVA16 layout."""
    if path is None:
        text = resources.files("arrayfeat").joinpath("data/ava16.txt").read_text(encoding="utf-8")
        return parse_geometry(text, "AVA16")
    path = Path(path)
    return parse_geometry(path.read_text(encoding="utf-8"), path.stem)


def default_geometry() -> ArrayGeometry:
    return load_geometry(None)


def select_subset(geom: ArrayGeometry, m: int) -> Subset:
    """First ``m`` microphones of the subset order, with their apertures."""
    if not 1 <= m <= geom.n_mics:
        raise ValueError(f"m must be in [1, {geom.n_mics}], got {m}")
    ids = geom.subset_order[:m]
    p = geom.positions(ids)
    spread = p.max(axis=0) - p.min(axis=0)
    return Subset(tuple(ids), float(spread[0]), float(spread[2]))


def max_lag_samples(d_max: float, fov_h: float, sample_rate: float, c: float = SPEED_OF_SOUND) -> int:
    """Largest TDOA in samples for sources inside the camera field of view.

    Uses the projected spacing ``d_max * sin(fov_h / 2)``, rounded up.
    """
    if d_max < 0 or fov_h < 0 or sample_rate <= 0 or c <= 0:
        raise ValueError("arguments must be positive")
    d_rel = d_max * math.sin(math.radians(fov_h) / 2)
    # guard against 62.99999999 style float noise before ceil
    return int(math.ceil(round(d_rel / c * sample_rate, 9)))


def azimuth_to_pixel(cam: CameraModel, az) -> np.ndarray | float:
    az = np.asarray(az, dtype=np.float64)
    if np.any(np.abs(az) > cam.fov_h / 2 + 1e-9):
        raise ValueError(f"azimuth outside the {cam.fov_h} degree field of view")
    out = cam.image_width * (az / cam.fov_h + 0.5)
    return float(out) if out.ndim == 0 else out


def pixel_to_azimuth(cam: CameraModel, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    out = (x / cam.image_width - 0.5) * cam.fov_h
    return float(out) if out.ndim == 0 else out


def source_direction(az_deg) -> np.ndarray:
    """Unit vector(s) pointing from the array towards a far-field source."""
    a = np.radians(np.asarray(az_deg, dtype=np.float64))
    return np.stack([np.sin(a), np.cos(a), np.zeros_like(a)], axis=-1)


def arrival_delays(positions: np.ndarray, az_deg, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Plane-wave arrival time of each mic relative to the origin, in seconds.

    Mics closer to the source (larger projection) receive earlier.
    Shape (..., n_mics) for azimuth shape (...).
    """
    return -(source_direction(az_deg) @ np.asarray(positions).T) / c

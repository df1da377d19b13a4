"""Point-cloud sweeps, sensor calibration files, and laser-layer assignment.

Sweep format (version 1)
------------------------
Flat little-endian binary, one record per return:

    x, y, z, i          4 x float32   (16-byte records, KITTI-compatible)
    x, y, z, i, layer   4 x float32 + 1 x int32 (20-byte records, opt-in)

There is no file header so that 16-byte sweeps interoperate with the
common detection tool chains; the version lives in this documentation.
Reading and writing are bit-exact inverses for valid files.

Calibration format (version 1)
------------------------------
Human-readable text. First line is the magic ``snowlidar-calib v1``,
followed by an INI body with one ``[sensor]`` block for the global
constants and one ``[laser N]`` block per laser, N ascending from 0.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import CalibrationFormatError, SweepFormatError, SweepRecordError

CALIB_MAGIC = "snowlidar-calib v1"

# Focal-offset recovery from the factory focal distance.
FOCAL_OFFSET_DIVISOR = 13100.0

UNASSIGNED_LAYER = -1


@dataclass(frozen=True)
class LidarPoint:
    """One LiDAR return in the sensor frame (meters, calibrated intensity)."""

    x: float
    y: float
    z: float
    i: float
    layer: int = UNASSIGNED_LAYER

    @property
    def range(self) -> float:
        return float(np.sqrt(self.x * self.x + self.y * self.y + self.z * self.z))


@dataclass(frozen=True)
class PointCloud:
    """Immutable sweep: positions (N, 3), intensities (N,), layer ids (N,).

    Layer id ``-1`` means "not yet assigned". Arrays are locked after
    construction so clouds can be shared across threads.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    layer: np.ndarray
    frame_id: str = ""

    def __post_init__(self) -> None:
        xyz = np.ascontiguousarray(self.xyz, dtype=np.float32)
        intensity = np.ascontiguousarray(self.intensity, dtype=np.float32)
        layer = np.ascontiguousarray(self.layer, dtype=np.int32)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must have shape (N, 3), got {xyz.shape}")
        n = xyz.shape[0]
        if intensity.shape != (n,) or layer.shape != (n,):
            raise ValueError("intensity and layer must have one entry per point")
        if n:
            if not np.isfinite(xyz).all():
                raise ValueError("non-finite coordinate in point cloud")
            if not np.isfinite(intensity).all():
                raise ValueError("non-finite intensity in point cloud")
            if (intensity < 0).any():
                raise ValueError("negative intensity in point cloud")
            if (np.abs(xyz).max(axis=1) == 0).any():
                raise ValueError("zero-range point in point cloud")
        for arr in (xyz, intensity, layer):
            arr.flags.writeable = False
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "layer", layer)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def __getitem__(self, idx: int) -> LidarPoint:
        x, y, z = (float(v) for v in self.xyz[idx])
        return LidarPoint(x, y, z, float(self.intensity[idx]), int(self.layer[idx]))

    @property
    def points(self) -> Iterator[LidarPoint]:
        return (self[k] for k in range(len(self)))

    def ranges(self) -> np.ndarray:
        """Euclidean range of every point, float64."""
        return np.linalg.norm(self.xyz.astype(np.float64), axis=1)

    def select(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz[mask], self.intensity[mask], self.layer[mask], self.frame_id)

    @staticmethod
    def empty(frame_id: str = "") -> "PointCloud":
        return PointCloud(
            np.empty((0, 3), np.float32), np.empty(0, np.float32), np.empty(0, np.int32), frame_id
        )


@dataclass(frozen=True)
class LaserCalibration:
    """Factory constants of a single laser."""

    elevation: float  # radians
    focal_slope: float  # intensity units
    focal_distance: float  # dimensionless, encodes the focal offset
    max_intensity: float

    @property
    def focal_offset(self) -> float:
        v = (1.0 - self.focal_distance) / FOCAL_OFFSET_DIVISOR
        return v * v


@dataclass(frozen=True)
class SensorCalibration:
    """Per-laser factory constants plus global sensor constants.

    Lasers must be listed in ascending elevation order; layer ids index
    into this ordering.
    """

    lasers: tuple[LaserCalibration, ...]
    pulse_width: float = 10e-9  # tau_H, seconds
    max_range: float = 120.0  # meters
    beam_divergence: float = 0.003  # radians, full opening angle
    overlap_near: float = 0.5  # R_1, meters (assumed; not a published value)
    overlap_far: float = 2.0  # R_2, meters (assumed; not a published value)

    def __post_init__(self) -> None:
        if not self.lasers:
            raise CalibrationFormatError("at least one laser required")
        if self.pulse_width <= 0:
            raise CalibrationFormatError("pulse_width must be > 0")
        if self.beam_divergence <= 0:
            raise CalibrationFormatError("beam_divergence must be > 0")
        if not (0.0 <= self.overlap_near < self.overlap_far <= self.max_range):
            raise CalibrationFormatError("need 0 <= R_1 < R_2 <= R_max")
        elevations = [l.elevation for l in self.lasers]
        if any(b < a for a, b in zip(elevations, elevations[1:])):
            raise CalibrationFormatError("lasers must be sorted by elevation")
        for k, laser in enumerate(self.lasers):
            if laser.max_intensity <= 0:
                raise CalibrationFormatError(f"laser {k}: max_intensity must be > 0")
            if not np.isfinite(laser.focal_offset):
                raise CalibrationFormatError(f"laser {k}: focal offset not finite")

    @property
    def n_lasers(self) -> int:
        return len(self.lasers)

    @property
    def elevation_angles(self) -> np.ndarray:
        return np.array([l.elevation for l in self.lasers], dtype=np.float64)

    @property
    def max_intensity_global(self) -> float:
        return max(l.max_intensity for l in self.lasers)

    @staticmethod
    def uniform(
        n_lasers: int,
        elevation_span: tuple[float, float] = (-0.30, 0.05),
        focal_slope: float = 0.0,
        focal_distance: float = 0.0,
        max_intensity: float = 255.0,
        **globals_: float,
    ) -> "SensorCalibration":
        """Calibration with evenly spaced elevations and shared laser constants."""
        lo, hi = elevation_span
        elevations = np.linspace(lo, hi, n_lasers) if n_lasers > 1 else np.array([lo])
        lasers = tuple(
            LaserCalibration(float(e), focal_slope, focal_distance, max_intensity)
            for e in elevations
        )
        return SensorCalibration(lasers, **globals_)


def _record_size(with_layer: bool) -> int:
    return 20 if with_layer else 16


def read_sweep(path: str | Path, with_layer: bool = False, frame_id: str | None = None) -> PointCloud:
    """Read a binary sweep file.

    Records with all-zero coordinates (no-return padding) are dropped
    because a stored point must have positive range. Non-finite
    coordinates or intensities are treated as corruption and raise
    :class:`SweepRecordError` naming the offending record indices.
    """
    path = Path(path)
    raw = path.read_bytes()
    rec = _record_size(with_layer)
    if len(raw) % rec != 0:
        raise SweepFormatError(
            f"{path}: byte length {len(raw)} is not a multiple of the {rec}-byte record size"
        )
    n = len(raw) // rec
    if with_layer:
        data = np.frombuffer(raw, dtype=np.dtype("<f4, <f4, <f4, <f4, <i4"))
        xyz = np.stack([data["f0"], data["f1"], data["f2"]], axis=1)
        intensity = np.asarray(data["f3"])
        layer = np.asarray(data["f4"])
    else:
        flat = np.frombuffer(raw, dtype="<f4").reshape(n, 4)
        xyz = flat[:, :3]
        intensity = flat[:, 3]
        layer = np.full(n, UNASSIGNED_LAYER, dtype=np.int32)

    bad = ~np.isfinite(xyz).all(axis=1) | ~np.isfinite(intensity) | (intensity < 0)
    if bad.any():
        idx = np.flatnonzero(bad)[:8].tolist()
        raise SweepRecordError(f"{path}: invalid records at indices {idx}")
    keep = np.abs(xyz).max(axis=1) > 0  # reject degenerate zero-range returns
    if not keep.all():
        xyz, intensity, layer = xyz[keep], intensity[keep], layer[keep]
    return PointCloud(xyz, intensity, layer, frame_id if frame_id is not None else path.stem)


def write_sweep(pc: PointCloud, path: str | Path, with_layer: bool = False) -> None:
    """Write a sweep; bit-exact inverse of :func:`read_sweep`."""
    path = Path(path)
    n = len(pc)
    if with_layer:
        out = np.empty(n, dtype=np.dtype("<f4, <f4, <f4, <f4, <i4"))
        out["f0"], out["f1"], out["f2"] = pc.xyz[:, 0], pc.xyz[:, 1], pc.xyz[:, 2]
        out["f3"] = pc.intensity
        out["f4"] = pc.layer
    else:
        out = np.empty((n, 4), dtype="<f4")
        out[:, :3] = pc.xyz
        out[:, 3] = pc.intensity
    path.write_bytes(out.tobytes())


def assign_layers(pc: PointCloud, calib: SensorCalibration) -> PointCloud:
    """Assign each point the laser index with the nearest elevation angle.

    Points that already carry a layer id keep it, so the operation is
    idempotent. Ties between two adjacent lasers go to the lower index.
    """
    if len(pc) == 0:
        return pc
    angles = calib.elevation_angles
    xyz = pc.xyz.astype(np.float64)
    elevation = np.arctan2(xyz[:, 2], np.hypot(xyz[:, 0], xyz[:, 1]))
    hi = np.searchsorted(angles, elevation).clip(1, len(angles) - 1) if len(angles) > 1 else None
    if hi is None:
        nearest = np.zeros(len(pc), dtype=np.int32)
    else:
        lo = hi - 1
        pick_lo = np.abs(elevation - angles[lo]) <= np.abs(angles[hi] - elevation)
        nearest = np.where(pick_lo, lo, hi).astype(np.int32)
    layer = np.where(pc.layer == UNASSIGNED_LAYER, nearest, pc.layer).astype(np.int32)
    return PointCloud(pc.xyz, pc.intensity, layer, pc.frame_id)


_SENSOR_KEYS = {
    "pulse_width_s": "pulse_width",
    "max_range_m": "max_range",
    "beam_divergence_rad": "beam_divergence",
    "overlap_near_m": "overlap_near",
    "overlap_far_m": "overlap_far",
}


def read_calibration(path: str | Path) -> SensorCalibration:
    path = Path(path)
    text = path.read_text()
    first, _, body = text.partition("\n")
    if first.strip() != CALIB_MAGIC:
        raise CalibrationFormatError(f"{path}: missing magic line {CALIB_MAGIC!r}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(body)
    except configparser.Error as exc:
        raise CalibrationFormatError(f"{path}: {exc}") from exc
    if "sensor" not in parser:
        raise CalibrationFormatError(f"{path}: missing [sensor] block")
    sensor = parser["sensor"]
    try:
        n_lasers = sensor.getint("n_lasers")
        globals_ = {
            dst: sensor.getfloat(src)
            for src, dst in _SENSOR_KEYS.items()
            if src in sensor
        }
        lasers = []
        for k in range(n_lasers):
            block = parser[f"laser {k}"]
            lasers.append(
                LaserCalibration(
                    elevation=block.getfloat("elevation_rad"),
                    focal_slope=block.getfloat("focal_slope"),
                    focal_distance=block.getfloat("focal_distance"),
                    max_intensity=block.getfloat("max_intensity"),
                )
            )
    except (KeyError, configparser.Error, TypeError, ValueError) as exc:
        raise CalibrationFormatError(f"{path}: {exc}") from exc
    return SensorCalibration(tuple(lasers), **globals_)


def write_calibration(calib: SensorCalibration, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser["sensor"] = {
        "n_lasers": str(calib.n_lasers),
        "pulse_width_s": repr(calib.pulse_width),
        "max_range_m": repr(calib.max_range),
        "beam_divergence_rad": repr(calib.beam_divergence),
        "overlap_near_m": repr(calib.overlap_near),
        "overlap_far_m": repr(calib.overlap_far),
    }
    for k, laser in enumerate(calib.lasers):
        parser[f"laser {k}"] = {
            "elevation_rad": repr(laser.elevation),
            "focal_slope": repr(laser.focal_slope),
            "focal_distance": repr(laser.focal_distance),
            "max_intensity": repr(laser.max_intensity),
        }
    buf = io.StringIO()
    parser.write(buf)
    Path(path).write_text(CALIB_MAGIC + "\n" + buf.getvalue())

"""Point-cloud data model and the shared preprocessing filters.

Clouds store columnar arrays for speed; ``points`` materializes the same
data as immutable per-point records on demand.  All filters are stable
subsequence selections: output order is input order with points dropped.
Coordinates are meters in the sensor frame (x forward, y left, z up,
origin at the LiDAR center).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

NUM_BEAMS = 8


@dataclass(frozen=True, slots=True)
class LidarPoint:
    """One LiDAR return: position, intensity and the beam that produced it.

    A raw point may carry the ``no_return`` marker instead of a real
    position; such points never survive :func:`remove_non_returns`.
    """

    x: float
    y: float
    z: float
    intensity: int
    beam: int
    no_return: bool = False

    def __post_init__(self):
        if not 0 <= self.beam < NUM_BEAMS:
            raise ValueError(f"beam must be in [0, {NUM_BEAMS - 1}], got {self.beam}")
        if self.intensity < 0:
            raise ValueError(f"intensity must be >= 0, got {self.intensity}")
        if not self.no_return:
            if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
                raise ValueError("coordinates of a returned point must be finite")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered collection of points from one LiDAR revolution."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    intensity: np.ndarray
    beam: np.ndarray
    no_return: np.ndarray
    frame_id: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        n = self.x.size
        for name in ("y", "z", "intensity", "beam", "no_return"):
            if getattr(self, name).size != n:
                raise ValueError("point-cloud columns must have equal length")
        if n:
            if self.intensity.min() < 0:
                raise ValueError("intensity must be >= 0")
            if self.beam.min() < 0 or self.beam.max() >= NUM_BEAMS:
                raise ValueError(f"beam must be in [0, {NUM_BEAMS - 1}]")
            returned = ~self.no_return
            if returned.any():
                coords = np.stack([self.x[returned], self.y[returned], self.z[returned]])
                if not np.isfinite(coords).all():
                    raise ValueError("coordinates of returned points must be finite")

    @classmethod
    def from_points(
        cls, points: Iterable[LidarPoint], frame_id: int = 0, timestamp: float = 0.0
    ) -> "PointCloud":
        pts = list(points)
        return cls(
            x=np.array([p.x for p in pts], dtype=float),
            y=np.array([p.y for p in pts], dtype=float),
            z=np.array([p.z for p in pts], dtype=float),
            intensity=np.array([p.intensity for p in pts], dtype=np.int64),
            beam=np.array([p.beam for p in pts], dtype=np.int64),
            no_return=np.array([p.no_return for p in pts], dtype=bool),
            frame_id=frame_id,
            timestamp=timestamp,
        )

    @cached_property
    def points(self) -> tuple[LidarPoint, ...]:
        return tuple(
            LidarPoint(x, y, z, int(i), int(b), bool(nr))
            for x, y, z, i, b, nr in zip(
                self.x.tolist(), self.y.tolist(), self.z.tolist(),
                self.intensity.tolist(), self.beam.tolist(), self.no_return.tolist(),
            )
        )

    def __len__(self) -> int:
        return int(self.x.size)

    def __iter__(self):
        return iter(self.points)

    def select(self, mask: np.ndarray) -> "PointCloud":
        """Order-preserving subset; the backbone of every filter."""
        return PointCloud(
            x=self.x[mask],
            y=self.y[mask],
            z=self.z[mask],
            intensity=self.intensity[mask],
            beam=self.beam[mask],
            no_return=self.no_return[mask],
            frame_id=self.frame_id,
            timestamp=self.timestamp,
        )

    @property
    def has_no_returns(self) -> bool:
        return bool(self.no_return.any())


def empty_cloud(frame_id: int = 0, timestamp: float = 0.0) -> PointCloud:
    return PointCloud.from_points([], frame_id=frame_id, timestamp=timestamp)


@dataclass(frozen=True)
class PreprocessConfig:
    """Ground and intensity thresholds for the preprocessing filters."""

    ground_z_threshold: float = -1.2
    low_intensity_threshold: int = 0
    high_intensity_threshold: int = 15

    def __post_init__(self):
        if self.low_intensity_threshold > self.high_intensity_threshold:
            raise ValueError(
                "low_intensity_threshold must be <= high_intensity_threshold "
                f"({self.low_intensity_threshold} > {self.high_intensity_threshold})"
            )


def remove_non_returns(cloud: PointCloud) -> PointCloud:
    """Drop points marked as no-return, preserving order."""
    return cloud.select(~cloud.no_return)


def remove_ground(cloud: PointCloud, ground_z_threshold: float) -> PointCloud:
    """Keep points with z at or above the ground threshold, preserving order."""
    _require_returns_only(cloud, "remove_ground")
    return cloud.select(cloud.z >= ground_z_threshold)


def threshold_split(cloud: PointCloud, cfg: PreprocessConfig) -> tuple[PointCloud, PointCloud]:
    """Split into the high-threshold and low-threshold intensity clouds.

    Returns ``(bright, low)``: intensity at or above the high and low
    thresholds respectively.  The bright cloud is a subset of the low one
    whenever the thresholds are ordered, which the config guarantees.
    """
    _require_returns_only(cloud, "threshold_split")
    bright = cloud.select(cloud.intensity >= cfg.high_intensity_threshold)
    low = cloud.select(cloud.intensity >= cfg.low_intensity_threshold)
    return bright, low


def preprocess(cloud: PointCloud, cfg: PreprocessConfig) -> tuple[PointCloud, PointCloud, PointCloud]:
    """Run the full filter chain; returns (nonground, bright, low)."""
    nonground = remove_ground(remove_non_returns(cloud), cfg.ground_z_threshold)
    bright, low = threshold_split(nonground, cfg)
    return nonground, bright, low


def _require_returns_only(cloud: PointCloud, op: str) -> None:
    if cloud.has_no_returns:
        raise ValueError(f"{op} requires non-return points to be removed first")


# ---------------------------------------------------------------------------
# Frame file formats
# ---------------------------------------------------------------------------

FRAME_HEADER = ["x", "y", "z", "intensity", "beam"]


def write_frame_csv(path: str | Path, cloud: PointCloud) -> None:
    """One point per row; no-return rows have empty x, y, z cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FRAME_HEADER)
        for x, y, z, i, b, nr in zip(
            cloud.x.tolist(), cloud.y.tolist(), cloud.z.tolist(),
            cloud.intensity.tolist(), cloud.beam.tolist(), cloud.no_return.tolist(),
        ):
            if nr:
                writer.writerow(["", "", "", i, b])
            else:
                writer.writerow([repr(x), repr(y), repr(z), i, b])


def read_frame_csv(path: str | Path, frame_id: int = 0, timestamp: float = 0.0) -> PointCloud:
    xs, ys, zs, intensities, beams, no_returns = [], [], [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FRAME_HEADER:
            raise ValueError(f"unexpected frame header {header} in {path}")
        for row in reader:
            if row[0] == "" or row[1] == "" or row[2] == "":
                xs.append(0.0)
                ys.append(0.0)
                zs.append(0.0)
                no_returns.append(True)
            else:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
                zs.append(float(row[2]))
                no_returns.append(False)
            intensities.append(int(row[3]))
            beams.append(int(row[4]))
    return PointCloud(
        x=np.asarray(xs, dtype=float),
        y=np.asarray(ys, dtype=float),
        z=np.asarray(zs, dtype=float),
        intensity=np.asarray(intensities, dtype=np.int64),
        beam=np.asarray(beams, dtype=np.int64),
        no_return=np.asarray(no_returns, dtype=bool),
        frame_id=frame_id,
        timestamp=timestamp,
    )


def write_frame_json(path: str | Path, cloud: PointCloud) -> None:
    doc = {
        "frame_id": cloud.frame_id,
        "timestamp": cloud.timestamp,
        "points": [
            {"x": None, "y": None, "z": None, "intensity": p.intensity, "beam": p.beam}
            if p.no_return
            else {"x": p.x, "y": p.y, "z": p.z, "intensity": p.intensity, "beam": p.beam}
            for p in cloud.points
        ],
    }
    Path(path).write_text(json.dumps(doc))


def read_frame_json(path: str | Path) -> PointCloud:
    doc = json.loads(Path(path).read_text())
    points = []
    for entry in doc["points"]:
        if entry["x"] is None or entry["y"] is None or entry["z"] is None:
            points.append(
                LidarPoint(0.0, 0.0, 0.0, int(entry["intensity"]), int(entry["beam"]), no_return=True)
            )
        else:
            points.append(
                LidarPoint(
                    float(entry["x"]),
                    float(entry["y"]),
                    float(entry["z"]),
                    int(entry["intensity"]),
                    int(entry["beam"]),
                )
            )
    return PointCloud.from_points(
        points, frame_id=int(doc["frame_id"]), timestamp=float(doc["timestamp"])
    )

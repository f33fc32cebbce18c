"""Shared detection and ground-truth records plus their CSV formats."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

SOURCES = ("lidar", "camera", "fused")

DETECTION_HEADER = ["frame_id", "source", "dist_m", "angle_deg", "conf"]
TRUTH_HEADER = ["frame_id", "object_id", "kind", "dist_m", "angle_deg"]


@dataclass(frozen=True)
class Detection:
    """A polar-frame detection: range in meters, azimuth in degrees.

    Angle convention: 0 degrees straight ahead (+x), positive toward +y
    (left of the sensor).
    """

    distance: float
    angle: float
    confidence: float
    source: str

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError(f"distance must be >= 0, got {self.distance}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")

    @property
    def xy(self) -> tuple[float, float]:
        rad = math.radians(self.angle)
        return (self.distance * math.cos(rad), self.distance * math.sin(rad))


@dataclass(frozen=True)
class TruthObject:
    """A labeled scene object: what is really out there at (dist, angle)."""

    object_id: int
    kind: str
    distance: float
    angle: float

    @property
    def is_beacon(self) -> bool:
        return self.kind == "beacon"

    @property
    def xy(self) -> tuple[float, float]:
        rad = math.radians(self.angle)
        return (self.distance * math.cos(rad), self.distance * math.sin(rad))


def write_detections(path: str | Path, frames: Iterable[tuple[int, list[Detection]]]) -> None:
    """Write per-frame detections as `frame_id,source,dist_m,angle_deg,conf`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DETECTION_HEADER)
        for frame_id, detections in frames:
            for det in detections:
                writer.writerow(
                    [frame_id, det.source, repr(float(det.distance)), repr(float(det.angle)),
                     repr(float(det.confidence))]
                )


def read_detections(path: str | Path) -> dict[int, list[Detection]]:
    frames: dict[int, list[Detection]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            det = Detection(
                distance=float(row["dist_m"]),
                angle=float(row["angle_deg"]),
                confidence=float(row["conf"]),
                source=row["source"],
            )
            frames.setdefault(int(row["frame_id"]), []).append(det)
    return frames


def write_truth(path: str | Path, frames: Iterable[tuple[int, list[TruthObject]]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_HEADER)
        for frame_id, objects in frames:
            for obj in objects:
                writer.writerow(
                    [frame_id, obj.object_id, obj.kind, repr(float(obj.distance)),
                     repr(float(obj.angle))]
                )


def read_truth(path: str | Path) -> dict[int, list[TruthObject]]:
    frames: dict[int, list[TruthObject]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            obj = TruthObject(
                object_id=int(row["object_id"]),
                kind=row["kind"],
                distance=float(row["dist_m"]),
                angle=float(row["angle_deg"]),
            )
            frames.setdefault(int(row["frame_id"]), []).append(obj)
    return frames

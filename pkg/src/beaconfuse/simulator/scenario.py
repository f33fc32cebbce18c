"""Plain-text scenario files: sections of key = value lines.

A scenario describes sensor settings and a sequence of frame layouts.
Layout blocks ([grid], [sweep], [random]) each contribute frames in file
order; [object] sections add static objects to every frame.  Randomized
layouts draw their geometry from a layout seed stored in the file, so the
run seed only affects sensor noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scene import (
    CameraModel,
    LidarModel,
    SceneObject,
    make_beacon,
    make_pallet,
    make_person,
    make_vehicle,
)

_FACTORIES = {
    "beacon": make_beacon,
    "person_vest": lambda x, y: make_person(x, y),
    "vehicle": lambda x, y: make_vehicle(x, y),
    "pallet": lambda x, y: make_pallet(x, y),
}

_KNOWN_SECTIONS = {"dataset", "lidar", "camera", "object", "grid", "sweep", "random"}


class ScenarioParseError(ValueError):
    """Malformed scenario text; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass
class _Section:
    name: str
    line: int
    entries: dict[str, tuple[str, int, int]] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.entries[key][0] if key in self.entries else default

    def require(self, key: str):
        if key not in self.entries:
            raise ScenarioParseError(f"[{self.name}] is missing required key {key!r}", self.line, 1)
        return self.entries[key][0]

    def parse(self, key: str, conv, default=None):
        if key not in self.entries:
            return default
        raw, line, col = self.entries[key]
        try:
            return conv(raw)
        except ScenarioParseError:
            raise
        except Exception:
            raise ScenarioParseError(f"bad value {raw!r} for {key!r}", line, col) from None


def _float_list(raw: str) -> list[float]:
    return [float(part.strip()) for part in raw.split(",") if part.strip()]


def _float_range(raw: str) -> tuple[float, float]:
    lo, hi = (float(part) for part in raw.split(":"))
    return lo, hi


def _int_range(raw: str) -> tuple[int, int]:
    lo, hi = (int(part) for part in raw.split(":"))
    return lo, hi


def _span(raw: str) -> list[float]:
    """start:stop:step, inclusive of the stop when it lands on the grid."""
    start, stop, step = (float(part) for part in raw.split(":"))
    if step <= 0:
        raise ValueError("step must be > 0")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


@dataclass
class Scenario:
    name: str
    lidar: LidarModel
    camera: CameraModel
    static_objects: list[SceneObject]
    frames: list[list[SceneObject]]
    sector_margin_deg: float | None

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def objects_for_frame(self, index: int) -> list[SceneObject]:
        return self.static_objects + self.frames[index]

    def lidar_for_frame(self, index: int) -> LidarModel:
        """Sector-follows-objects mode narrows the sweep around the layout."""
        objects = self.objects_for_frame(index)
        if self.sector_margin_deg is None or not objects:
            return self.lidar
        angles = [obj.angle for obj in objects]
        start = min(angles) - self.sector_margin_deg
        end = max(angles) + self.sector_margin_deg
        return LidarModel(
            height=self.lidar.height,
            elevations_deg=self.lidar.elevations_deg,
            azimuth_step_deg=self.lidar.azimuth_step_deg,
            azimuth_start_deg=max(start, -180.0),
            azimuth_end_deg=min(end, 180.0),
            range_noise_m=self.lidar.range_noise_m,
            dropout=self.lidar.dropout,
            intensity_noise=self.lidar.intensity_noise,
            intensity_falloff_m=self.lidar.intensity_falloff_m,
            max_range_m=self.lidar.max_range_m,
        )


def parse_scenario_file(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def parse_scenario(text: str) -> Scenario:
    sections = _tokenize(text)
    lidar_kwargs = {}
    camera_kwargs = {}
    name = "scenario"
    sector_margin = None
    static_objects: list[SceneObject] = []
    frames: list[list[SceneObject]] = []

    for section in sections:
        if section.name == "dataset":
            name = section.get("name", name)
        elif section.name == "lidar":
            sector_margin = section.parse("sector_margin_deg", float, sector_margin)
            for key, conv in (
                ("height", float),
                ("azimuth_step_deg", float),
                ("azimuth_start_deg", float),
                ("azimuth_end_deg", float),
                ("range_noise_m", float),
                ("dropout", float),
                ("intensity_noise", float),
                ("intensity_falloff_m", float),
                ("max_range_m", float),
            ):
                value = section.parse(key, conv)
                if value is not None:
                    lidar_kwargs[key] = value
        elif section.name == "camera":
            for key, conv in (
                ("image_width", int),
                ("image_height", int),
                ("fov_deg", float),
                ("pixel_noise", float),
                ("confidence_base", float),
                ("confidence_slope", float),
                ("confidence_noise", float),
                ("miss_rate", float),
            ):
                value = section.parse(key, conv)
                if value is not None:
                    camera_kwargs[key] = value
        elif section.name == "object":
            static_objects.append(_static_object(section))
        elif section.name == "grid":
            frames.extend(_grid_frames(section))
        elif section.name == "sweep":
            frames.extend(_sweep_frames(section))
        elif section.name == "random":
            frames.extend(_random_frames(section))

    return Scenario(
        name=name,
        lidar=LidarModel(**lidar_kwargs),
        camera=CameraModel(**camera_kwargs),
        static_objects=static_objects,
        frames=frames,
        sector_margin_deg=sector_margin,
    )


def _tokenize(text: str) -> list[_Section]:
    sections: list[_Section] = []
    current: _Section | None = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        stripped = raw_line.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        line = stripped.strip()
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioParseError("unterminated section header", line_no, len(stripped))
            section_name = line[1:-1].strip()
            if section_name not in _KNOWN_SECTIONS:
                raise ScenarioParseError(f"unknown section [{section_name}]", line_no, 1)
            current = _Section(name=section_name, line=line_no)
            sections.append(current)
            continue
        if current is None:
            raise ScenarioParseError("key outside of any section", line_no, 1)
        if "=" not in line:
            raise ScenarioParseError("expected key = value", line_no, 1)
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ScenarioParseError("empty key", line_no, 1)
        column = raw_line.index("=") + 2
        if key in current.entries:
            raise ScenarioParseError(f"duplicate key {key!r} in [{current.name}]", line_no, 1)
        current.entries[key] = (value.strip(), line_no, column)
    return sections


def _kind(section: _Section) -> str:
    kind = section.get("kind", "beacon")
    if kind not in _FACTORIES:
        raw, line, col = section.entries["kind"]
        raise ScenarioParseError(f"unknown object kind {raw!r}", line, col)
    return kind


def _static_object(section: _Section) -> SceneObject:
    kind = _kind(section)
    x = section.parse("x", float)
    y = section.parse("y", float)
    if x is None or y is None:
        raise ScenarioParseError("[object] needs x and y", section.line, 1)
    obj = _FACTORIES[kind](x, y)
    yaw = section.parse("yaw", float, 0.0)
    if yaw:
        obj = SceneObject(obj.kind, obj.position, yaw=yaw, reflectivity=obj.reflectivity)
    return obj


def _grid_frames(section: _Section) -> list[list[SceneObject]]:
    kind = _kind(section)
    angles = section.parse("angles_deg", _float_list)
    distances = section.parse("distances_m", _span)
    if angles is None or distances is None:
        raise ScenarioParseError("[grid] needs angles_deg and distances_m", section.line, 1)
    frames = []
    for angle in angles:
        for dist in distances:
            rad = math.radians(angle)
            frames.append([_FACTORIES[kind](dist * math.cos(rad), dist * math.sin(rad))])
    return frames


def _sweep_frames(section: _Section) -> list[list[SceneObject]]:
    kind = _kind(section)
    angle = section.parse("angle_deg", float, 0.0)
    start = section.parse("start_m", float)
    stop = section.parse("stop_m", float)
    count = section.parse("frames", int)
    if start is None or stop is None or count is None:
        raise ScenarioParseError("[sweep] needs start_m, stop_m and frames", section.line, 1)
    if count < 2:
        raise ScenarioParseError("[sweep] needs at least 2 frames", section.line, 1)
    rad = math.radians(angle)
    frames = []
    for i in range(count):
        dist = start + (stop - start) * i / (count - 1)
        frames.append([_FACTORIES[kind](dist * math.cos(rad), dist * math.sin(rad))])
    return frames


def _random_frames(section: _Section) -> list[list[SceneObject]]:
    count = section.parse("frames", int)
    if count is None:
        raise ScenarioParseError("[random] needs frames", section.line, 1)
    layout_seed = section.parse("layout_seed", int, 0)
    counts = {
        kind: section.parse(key, _int_range, (0, 0))
        for kind, key in (
            ("beacon", "beacons"),
            ("person_vest", "persons"),
            ("vehicle", "vehicles"),
            ("pallet", "pallets"),
        )
    }
    dist_range = section.parse("distance_m", _float_range, (3.0, 18.0))
    angle_range = section.parse("angle_deg", _float_range, (-20.0, 20.0))
    min_sep = section.parse("min_separation_deg", float, 0.0)
    min_sep_m = section.parse("min_separation_m", float, 2.0)
    rng = np.random.default_rng(layout_seed)
    frames = []
    for _ in range(count):
        objects: list[SceneObject] = []
        for kind, (lo, hi) in counts.items():
            n = int(rng.integers(lo, hi + 1)) if hi > lo else lo
            for _ in range(n):
                placed = _place(rng, kind, dist_range, angle_range, objects, min_sep, min_sep_m)
                if placed is not None:
                    objects.append(placed)
        frames.append(objects)
    return frames


def _place(rng, kind, dist_range, angle_range, existing, min_sep_deg, min_sep_m, tries=200):
    for _ in range(tries):
        angle = float(rng.uniform(*angle_range))
        dist = float(rng.uniform(*dist_range))
        rad = math.radians(angle)
        x, y = dist * math.cos(rad), dist * math.sin(rad)
        clear = all(
            abs(angle - other.angle) >= min_sep_deg
            and math.hypot(x - other.position[0], y - other.position[1]) >= min_sep_m
            for other in existing
        )
        if clear:
            return _FACTORIES[kind](x, y)
    return None

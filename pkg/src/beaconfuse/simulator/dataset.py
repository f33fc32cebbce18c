"""Dataset generation: LiDAR frames, camera boxes, truth and mapper pairs.

Layout on disk::

    <out>/meta.json            frame count, camera dims, seed, name
    <out>/frames/frame_00000.csv   point clouds, one file per frame
    <out>/boxes.csv            frame_id + bounding box + confidence
    <out>/truth.csv            frame_id, object_id, kind, dist_m, angle_deg
    <out>/pairs.csv            mapper training pairs (box -> dist, angle)
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..camera_map import BoundingBox, write_pairs_csv
from ..point_cloud import PointCloud, read_frame_csv, write_frame_csv
from ..records import TruthObject, write_truth
from .render import render_camera, render_lidar
from .scenario import Scenario, parse_scenario_file

BOXES_HEADER = ["frame_id", "xmin", "ymin", "xmax", "ymax", "conf"]


@dataclass(frozen=True)
class DatasetPaths:
    root: Path

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"

    @property
    def boxes(self) -> Path:
        return self.root / "boxes.csv"

    @property
    def truth(self) -> Path:
        return self.root / "truth.csv"

    @property
    def pairs(self) -> Path:
        return self.root / "pairs.csv"

    @property
    def meta(self) -> Path:
        return self.root / "meta.json"

    def frame_path(self, frame_id: int) -> Path:
        return self.frames_dir / f"frame_{frame_id:05d}.csv"

    def frame_ids(self) -> list[int]:
        return sorted(
            int(path.stem.split("_")[1]) for path in self.frames_dir.glob("frame_*.csv")
        )

    def load_frame(self, frame_id: int) -> PointCloud:
        return read_frame_csv(self.frame_path(frame_id), frame_id=frame_id, timestamp=frame_id / 5.0)


def generate_dataset(
    scenario: Scenario | str | Path,
    seed: int,
    out_dir: str | Path,
    write_frames: bool = True,
) -> DatasetPaths:
    """Render every scenario frame and write the dataset files.

    Geometry comes from the scenario alone; the seed feeds only the
    per-frame sensor noise streams, so two seeds share identical truth.
    """
    if not isinstance(scenario, Scenario):
        scenario = parse_scenario_file(scenario)
    paths = DatasetPaths(root=Path(out_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    paths.frames_dir.mkdir(exist_ok=True)

    truth_rows = []
    box_rows = []
    pair_rows = []
    for frame_id in range(scenario.frame_count):
        objects = scenario.objects_for_frame(frame_id)
        lidar_model = scenario.lidar_for_frame(frame_id)
        cloud = render_lidar(
            objects,
            lidar_model,
            np.random.SeedSequence([seed, frame_id, 0]),
            frame_id=frame_id,
            timestamp=frame_id / 5.0,
        )
        tagged = render_camera(objects, scenario.camera, np.random.SeedSequence([seed, frame_id, 1]))
        if write_frames:
            write_frame_csv(paths.frame_path(frame_id), cloud)
        truth_rows.append(
            (
                frame_id,
                [
                    TruthObject(object_id=i, kind=obj.kind, distance=obj.distance, angle=obj.angle)
                    for i, obj in enumerate(objects)
                ],
            )
        )
        box_rows.append((frame_id, [t.box for t in tagged]))
        pair_rows.extend((t.box, (t.distance, t.angle)) for t in tagged)

    write_truth(paths.truth, truth_rows)
    write_boxes_csv(paths.boxes, box_rows)
    write_pairs_csv(paths.pairs, pair_rows)
    paths.meta.write_text(
        json.dumps(
            {
                "name": scenario.name,
                "frames": scenario.frame_count,
                "seed": seed,
                "image_width": scenario.camera.image_width,
                "image_height": scenario.camera.image_height,
            },
            indent=2,
        )
    )
    return paths


def write_boxes_csv(path: str | Path, frames: list[tuple[int, list[BoundingBox]]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BOXES_HEADER)
        for frame_id, boxes in frames:
            for box in boxes:
                writer.writerow(
                    [frame_id, repr(float(box.xmin)), repr(float(box.ymin)), repr(float(box.xmax)),
                     repr(float(box.ymax)), repr(float(box.confidence))]
                )


def read_boxes_csv(
    path: str | Path, image_width: int = 640, image_height: int = 480
) -> dict[int, list[BoundingBox]]:
    frames: dict[int, list[BoundingBox]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            box = BoundingBox(
                xmin=float(row["xmin"]),
                ymin=float(row["ymin"]),
                xmax=float(row["xmax"]),
                ymax=float(row["ymax"]),
                confidence=float(row["conf"]),
                image_width=image_width,
                image_height=image_height,
            )
            frames.setdefault(int(row["frame_id"]), []).append(box)
    return frames


def read_meta(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())

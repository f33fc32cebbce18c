"""Synthetic scene generator: 8-beam LiDAR ray model and pinhole camera."""

from .scene import (
    CameraModel,
    LidarModel,
    SceneObject,
    TaggedBox,
    make_beacon,
    make_pallet,
    make_person,
    make_vehicle,
)
from .render import render_camera, render_lidar
from .scenario import Scenario, ScenarioParseError, parse_scenario, parse_scenario_file
from .dataset import DatasetPaths, generate_dataset, read_boxes_csv, read_meta

__all__ = [
    "CameraModel",
    "LidarModel",
    "SceneObject",
    "TaggedBox",
    "make_beacon",
    "make_pallet",
    "make_person",
    "make_vehicle",
    "render_camera",
    "render_lidar",
    "Scenario",
    "ScenarioParseError",
    "parse_scenario",
    "parse_scenario_file",
    "DatasetPaths",
    "generate_dataset",
    "read_boxes_csv",
    "read_meta",
]

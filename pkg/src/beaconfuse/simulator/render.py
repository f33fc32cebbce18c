"""Deterministic LiDAR and camera rendering of a scene."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..camera_map import BoundingBox
from ..point_cloud import PointCloud
from .scene import (
    BEACON_CONE_BASE_RADIUS,
    BEACON_TOTAL_HEIGHT,
    GROUND_INTENSITY,
    CameraModel,
    LidarModel,
    SceneObject,
    TaggedBox,
    intersect_primitive,
    object_primitives,
)


def _rng_from_seed(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def render_lidar(
    scene: Sequence[SceneObject],
    model: LidarModel,
    seed,
    frame_id: int = 0,
    timestamp: float = 0.0,
) -> PointCloud:
    """Cast every (azimuth, beam) ray against the scene and the ground.

    Range noise is applied along the exact ray direction; dropout turns a
    hit into a no-return point.  Point order is azimuth-major, beam-minor,
    matching a spinning device's firing sequence.
    """
    rng = _rng_from_seed(seed)
    azimuths = np.radians(model.azimuths_deg())
    elevations = np.radians(np.asarray(model.elevations_deg))
    n_az, n_beams = azimuths.size, elevations.size

    az = np.repeat(azimuths, n_beams)
    beam_idx = np.tile(np.arange(n_beams), n_az)
    el = elevations[beam_idx]
    cos_el = np.cos(el)
    dirs = np.column_stack([cos_el * np.cos(az), cos_el * np.sin(az), np.sin(el)])
    n_rays = dirs.shape[0]

    # Ground plane first; every object hit must beat it.
    dz = dirs[:, 2]
    with np.errstate(divide="ignore"):
        best_t = np.where(dz < 0, model.ground_z / dz, np.inf)
    best_intensity = np.full(n_rays, GROUND_INTENSITY)

    for obj in scene:
        for prim in object_primitives(obj, model.ground_z):
            t, intensity = intersect_primitive(prim, dirs)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_intensity = np.where(closer, intensity, best_intensity)

    hit = np.isfinite(best_t) & (best_t <= model.max_range_m)
    noise = rng.normal(0.0, model.range_noise_m, size=n_rays)
    dropout = rng.random(n_rays) < model.dropout
    intensity_noise = rng.normal(0.0, model.intensity_noise, size=n_rays)

    returned = hit & ~dropout
    t_noisy = np.where(returned, np.maximum(best_t + noise, 0.0), 0.0)
    decay = np.exp(-np.where(np.isfinite(best_t), best_t, 0.0) / model.intensity_falloff_m)
    raw_intensity = best_intensity * decay + intensity_noise
    intensity = np.where(returned, np.clip(np.rint(raw_intensity), 0, 255), 0).astype(np.int64)

    return PointCloud(
        x=np.where(returned, t_noisy * dirs[:, 0], 0.0),
        y=np.where(returned, t_noisy * dirs[:, 1], 0.0),
        z=np.where(returned, t_noisy * dirs[:, 2], 0.0),
        intensity=intensity,
        beam=beam_idx.astype(np.int64),
        no_return=~returned,
        frame_id=frame_id,
        timestamp=timestamp,
    )


# Horizontal half-width and height presented to the camera, per kind.
_CAMERA_EXTENTS = {"beacon": (BEACON_CONE_BASE_RADIUS, BEACON_TOTAL_HEIGHT)}


def render_camera(
    scene: Sequence[SceneObject],
    model: CameraModel,
    seed,
) -> list[TaggedBox]:
    """Project beacons into noisy pixel boxes with hidden truth tags.

    Only beacons are boxed (the image detector is trained for them);
    objects outside the field of view or the detection range, and random
    misses, produce nothing.
    """
    rng = _rng_from_seed(seed)
    f = model.focal_px
    cx_img = model.image_width / 2.0
    cy_img = model.image_height / 2.0
    tagged = []
    for object_id, obj in enumerate(scene):
        if obj.kind not in _CAMERA_EXTENTS:
            continue
        dist = obj.distance
        angle = obj.angle
        # Consume the per-object noise budget before any visibility cut so
        # the stream stays aligned across configurations.
        edge_noise = rng.normal(0.0, model.pixel_noise, size=4)
        conf_noise = rng.normal(0.0, model.confidence_noise)
        missed = rng.random() < model.miss_rate
        if missed or dist < model.min_range_m or dist > model.max_range_m:
            continue
        if abs(angle) > model.fov_deg / 2.0:
            continue
        half_width, height = _CAMERA_EXTENTS[obj.kind]
        theta = math.radians(angle)
        spread = math.atan2(half_width, dist)
        u1 = cx_img + f * math.tan(theta - spread)
        u2 = cx_img + f * math.tan(theta + spread)
        forward = dist * math.cos(theta)
        z_top = height - model.sensor_height
        z_bottom = -model.sensor_height
        v_top = cy_img - f * (z_top / forward)
        v_bottom = cy_img - f * (z_bottom / forward)
        xmin = min(u1, u2) + edge_noise[0]
        xmax = max(u1, u2) + edge_noise[1]
        ymin = min(v_top, v_bottom) + edge_noise[2]
        ymax = max(v_top, v_bottom) + edge_noise[3]
        xmin = min(max(xmin, 0.0), model.image_width - 2.0)
        ymin = min(max(ymin, 0.0), model.image_height - 2.0)
        xmax = max(min(xmax, float(model.image_width)), xmin + 1.0)
        ymax = max(min(ymax, float(model.image_height)), ymin + 1.0)
        confidence = model.confidence_base - model.confidence_slope * (dist - model.min_range_m)
        confidence = min(max(confidence + conf_noise, 0.05), 0.999)
        box = BoundingBox(
            xmin=xmin,
            ymin=ymin,
            xmax=xmax,
            ymax=ymax,
            confidence=confidence,
            image_width=model.image_width,
            image_height=model.image_height,
        )
        tagged.append(TaggedBox(box=box, object_id=object_id, distance=dist, angle=angle))
    return tagged

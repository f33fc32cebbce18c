"""Greedy centroid clustering of bright points and the front-guard check.

The clusterer makes a single forward scan over the cloud.  An unassigned
point seeds a new cluster; every later still-unassigned point whose
xy-distance to the cluster's *current* centroid is below epsilon joins it,
moving the centroid (running mean).  Results therefore depend on point
order; that is inherent to the method, not a bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .point_cloud import PointCloud
from .records import Detection


@dataclass(frozen=True)
class Cluster:
    """A group of bright points; ids are assigned in seed order from 1."""

    id: int
    member_indices: tuple[int, ...]
    centroid: tuple[float, float]

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"cluster id must be >= 1, got {self.id}")


@dataclass(frozen=True)
class ClusterConfig:
    epsilon: float = 0.5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class FrontGuardRegion:
    """Axis-aligned box directly ahead of the vehicle, in sensor frame."""

    x_range: tuple[float, float] = (0.5, 6.0)
    y_range: tuple[float, float] = (-1.0, 1.0)
    z_range: tuple[float, float] = (-1.2, 1.5)

    def __post_init__(self):
        for name, (lo, hi) in (("x", self.x_range), ("y", self.y_range), ("z", self.z_range)):
            if not lo < hi:
                raise ValueError(f"{name}_range must have min < max, got ({lo}, {hi})")


def cluster_bright_points(bright: PointCloud, cfg: ClusterConfig) -> list[Cluster]:
    """Cluster a bright cloud into centroid groups.

    The scan over candidate joiners is vectorized between centroid moves:
    with the centroid fixed, the next joining point is the first
    unassigned one within epsilon, so the sequential semantics are
    preserved exactly.
    """
    n = len(bright)
    if n == 0:
        return []
    x, y = bright.x, bright.y
    labels = np.zeros(n, dtype=np.int64)
    eps = cfg.epsilon
    clusters: list[Cluster] = []
    cl = 0
    for j in range(n):
        if labels[j]:
            continue
        cl += 1
        labels[j] = cl
        cx, cy = float(x[j]), float(y[j])
        count = 1
        pos = j + 1
        while pos < n:
            dist = np.sqrt((x[pos:] - cx) ** 2 + (y[pos:] - cy) ** 2)
            hits = np.nonzero((labels[pos:] == 0) & (dist < eps))[0]
            if hits.size == 0:
                break
            m = pos + int(hits[0])
            labels[m] = cl
            count += 1
            cx += (float(x[m]) - cx) / count
            cy += (float(y[m]) - cy) / count
            pos = m + 1
        members = tuple(int(i) for i in np.nonzero(labels == cl)[0])
        clusters.append(Cluster(id=cl, member_indices=members, centroid=(cx, cy)))
    return clusters


def labels_from_clusters(clusters: list[Cluster], n_points: int) -> list[int]:
    """Per-point cluster id (0 = unassigned, which never survives a full run)."""
    labels = [0] * n_points
    for cluster in clusters:
        for idx in cluster.member_indices:
            labels[idx] = cluster.id
    return labels


def front_guard_detect(
    nonground: PointCloud,
    region: FrontGuardRegion,
    cfg: ClusterConfig = ClusterConfig(),
) -> list[Detection]:
    """Report clusters of any-intensity points inside the guard region.

    Each cluster becomes a full-confidence lidar detection at its
    centroid's range and azimuth.
    """
    (x0, x1), (y0, y1), (z0, z1) = region.x_range, region.y_range, region.z_range
    inside = nonground.select(
        (nonground.x >= x0) & (nonground.x <= x1)
        & (nonground.y >= y0) & (nonground.y <= y1)
        & (nonground.z >= z0) & (nonground.z <= z1)
    )
    detections = []
    for cluster in cluster_bright_points(inside, cfg):
        cx, cy = cluster.centroid
        detections.append(
            Detection(
                distance=math.hypot(cx, cy),
                angle=math.degrees(math.atan2(cy, cx)),
                confidence=1.0,
                source="lidar",
            )
        )
    return detections

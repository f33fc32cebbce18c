"""End-to-end orchestration: config, per-frame execution, dataset assembly.

One frame flows preprocess -> cluster -> features -> classifier ->
confidence squash, joined by the camera mapper's detections, then through
association, fuzzy fusion and thresholding.  Stage wall times are recorded
per frame against the 200 ms (5 Hz) budget.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .camera_map import BoundingBox, MapperNetwork, predict
from .classifier import LinearSvmModel, SigmoidConfig, discriminant, pseudo_confidence
from .clustering import ClusterConfig, FrontGuardRegion, cluster_bright_points, front_guard_detect
from .features import FeatureVector, RegionConfig, extract_features
from .fusion import FusionConfig, FuzzySystem, LidarRawDetection, PairedFrame, fuse_frame
from .point_cloud import PointCloud, PreprocessConfig, preprocess
from .records import Detection, TruthObject

FRAME_BUDGET_MS = 200.0

STAGES = ("preprocess", "cluster", "features", "classify", "camera_map", "fuse")


class PipelineError(RuntimeError):
    """A stage failed for one frame; names both so logs stay actionable."""

    def __init__(self, frame_id: int, stage: str, cause: Exception):
        super().__init__(f"frame {frame_id}, stage {stage}: {cause}")
        self.frame_id = frame_id
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    region: RegionConfig = field(default_factory=RegionConfig)
    sigmoid: SigmoidConfig = field(default_factory=SigmoidConfig)
    angle_threshold: float = 3.0
    confidence_threshold: float = 0.65
    front_guard: FrontGuardRegion = field(default_factory=FrontGuardRegion)
    front_guard_enabled: bool = False
    distance_gate: float = 1.0
    svm_model: str = "svm.json"
    mapper_model: str = "mapper.json"

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(
            angle_threshold=self.angle_threshold,
            confidence_threshold=self.confidence_threshold,
            alpha=self.sigmoid.alpha,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "preprocess": {
                "ground_z_threshold": self.preprocess.ground_z_threshold,
                "low_intensity_threshold": self.preprocess.low_intensity_threshold,
                "high_intensity_threshold": self.preprocess.high_intensity_threshold,
            },
            "cluster": {"epsilon": self.cluster.epsilon},
            "region": {
                "dx_inner": self.region.dx_inner,
                "dy_inner": self.region.dy_inner,
                "dx_outer": self.region.dx_outer,
                "dy_outer": self.region.dy_outer,
                "z_min": self.region.z_min,
                "lidar_height": self.region.lidar_height,
            },
            "sigmoid": {"alpha": self.sigmoid.alpha},
            "fusion": {
                "angle_threshold": self.angle_threshold,
                "confidence_threshold": self.confidence_threshold,
            },
            "front_guard": {
                "enabled": self.front_guard_enabled,
                "x_range": list(self.front_guard.x_range),
                "y_range": list(self.front_guard.y_range),
                "z_range": list(self.front_guard.z_range),
            },
            "metrics": {"distance_gate": self.distance_gate},
            "models": {"svm": self.svm_model, "mapper": self.mapper_model},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        _reject_unknown(doc, {
            "seed", "preprocess", "cluster", "region", "sigmoid", "fusion",
            "front_guard", "metrics", "models",
        }, "")
        _reject_unknown(doc.get("preprocess", {}), {
            "ground_z_threshold", "low_intensity_threshold", "high_intensity_threshold",
        }, "preprocess")
        _reject_unknown(doc.get("cluster", {}), {"epsilon"}, "cluster")
        _reject_unknown(doc.get("region", {}), {
            "dx_inner", "dy_inner", "dx_outer", "dy_outer", "z_min", "lidar_height",
        }, "region")
        _reject_unknown(doc.get("sigmoid", {}), {"alpha"}, "sigmoid")
        _reject_unknown(doc.get("fusion", {}), {"angle_threshold", "confidence_threshold"}, "fusion")
        _reject_unknown(doc.get("front_guard", {}), {"enabled", "x_range", "y_range", "z_range"},
                        "front_guard")
        _reject_unknown(doc.get("metrics", {}), {"distance_gate"}, "metrics")
        _reject_unknown(doc.get("models", {}), {"svm", "mapper"}, "models")

        defaults = cls()
        pre = doc.get("preprocess", {})
        clu = doc.get("cluster", {})
        reg = doc.get("region", {})
        sig = doc.get("sigmoid", {})
        fus = doc.get("fusion", {})
        fg = doc.get("front_guard", {})
        met = doc.get("metrics", {})
        models = doc.get("models", {})
        return cls(
            seed=int(doc.get("seed", defaults.seed)),
            preprocess=PreprocessConfig(
                ground_z_threshold=float(pre.get("ground_z_threshold", defaults.preprocess.ground_z_threshold)),
                low_intensity_threshold=int(pre.get("low_intensity_threshold", defaults.preprocess.low_intensity_threshold)),
                high_intensity_threshold=int(pre.get("high_intensity_threshold", defaults.preprocess.high_intensity_threshold)),
            ),
            cluster=ClusterConfig(epsilon=float(clu.get("epsilon", defaults.cluster.epsilon))),
            region=RegionConfig(
                dx_inner=float(reg.get("dx_inner", defaults.region.dx_inner)),
                dy_inner=float(reg.get("dy_inner", defaults.region.dy_inner)),
                dx_outer=float(reg.get("dx_outer", defaults.region.dx_outer)),
                dy_outer=float(reg.get("dy_outer", defaults.region.dy_outer)),
                z_min=float(reg.get("z_min", defaults.region.z_min)),
                lidar_height=float(reg.get("lidar_height", defaults.region.lidar_height)),
            ),
            sigmoid=SigmoidConfig(alpha=float(sig.get("alpha", defaults.sigmoid.alpha))),
            angle_threshold=float(fus.get("angle_threshold", defaults.angle_threshold)),
            confidence_threshold=float(fus.get("confidence_threshold", defaults.confidence_threshold)),
            front_guard=FrontGuardRegion(
                x_range=tuple(fg.get("x_range", defaults.front_guard.x_range)),
                y_range=tuple(fg.get("y_range", defaults.front_guard.y_range)),
                z_range=tuple(fg.get("z_range", defaults.front_guard.z_range)),
            ),
            front_guard_enabled=bool(fg.get("enabled", defaults.front_guard_enabled)),
            distance_gate=float(met.get("distance_gate", defaults.distance_gate)),
            svm_model=str(models.get("svm", defaults.svm_model)),
            mapper_model=str(models.get("mapper", defaults.mapper_model)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _reject_unknown(doc: dict, allowed: set[str], prefix: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        where = prefix or "top level"
        raise ValueError(f"unknown config keys at {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class FrameResult:
    frame_id: int
    lidar_detections: tuple[Detection, ...]
    camera_detections: tuple[Detection, ...]
    fused_detections: tuple[Detection, ...]
    front_guard_detections: tuple[Detection, ...]
    stage_ms: dict[str, float]
    lidar_raw: tuple[LidarRawDetection, ...] = ()

    @property
    def total_ms(self) -> float:
        return sum(self.stage_ms.values())


def lidar_beacon_candidates(
    cloud: PointCloud,
    cfg: PipelineConfig,
    svm: LinearSvmModel,
) -> list[LidarRawDetection]:
    _, bright, low = preprocess(cloud, cfg.preprocess)
    clusters = cluster_bright_points(bright, cfg.cluster)
    out = []
    for cluster in clusters:
        cx, cy = cluster.centroid
        fv = extract_features(bright, low, (cx, cy, 0.0), cfg.region)
        d = discriminant(svm, fv)
        if d <= 0.0:
            out.append(
                LidarRawDetection(
                    distance=math.hypot(cx, cy),
                    angle=math.degrees(math.atan2(cy, cx)),
                    discriminant=d,
                )
            )
    return out


def run_pipeline(
    cfg: PipelineConfig,
    frames: Iterable[tuple[PointCloud, Sequence[BoundingBox]]],
    svm: LinearSvmModel,
    mapper: MapperNetwork,
    fuzzy: FuzzySystem | None = None,
) -> Iterator[FrameResult]:
    """Process frames in order, yielding detections and stage timings."""
    if fuzzy is None:
        fuzzy = FuzzySystem()
    fusion_cfg = cfg.fusion_config()
    for cloud, boxes in frames:
        frame_id = cloud.frame_id
        stage_ms: dict[str, float] = {}

        def timed(stage, fn, *args):
            start = time.perf_counter()
            try:
                result = fn(*args)
            except Exception as exc:
                raise PipelineError(frame_id, stage, exc) from exc
            stage_ms[stage] = (time.perf_counter() - start) * 1e3
            return result

        nonground, bright, low = timed("preprocess", preprocess, cloud, cfg.preprocess)
        clusters = timed("cluster", cluster_bright_points, bright, cfg.cluster)

        def feature_stage():
            return [
                extract_features(bright, low, (c.centroid[0], c.centroid[1], 0.0), cfg.region)
                for c in clusters
            ]

        feature_vectors = timed("features", feature_stage)

        def classify_stage():
            raw = []
            dets = []
            for cluster, fv in zip(clusters, feature_vectors):
                d = discriminant(svm, fv)
                if d > 0.0:
                    continue
                cx, cy = cluster.centroid
                raw.append(
                    LidarRawDetection(
                        distance=math.hypot(cx, cy),
                        angle=math.degrees(math.atan2(cy, cx)),
                        discriminant=d,
                    )
                )
                dets.append(
                    Detection(
                        distance=raw[-1].distance,
                        angle=raw[-1].angle,
                        confidence=pseudo_confidence(d, cfg.sigmoid),
                        source="lidar",
                    )
                )
            return raw, dets

        lidar_raw, lidar_dets = timed("classify", classify_stage)
        camera_dets = timed("camera_map", lambda: [predict(mapper, box) for box in boxes])
        fused = timed("fuse", fuse_frame, camera_dets, lidar_dets, fusion_cfg, fuzzy)

        guard: list[Detection] = []
        if cfg.front_guard_enabled:
            guard = front_guard_detect(nonground, cfg.front_guard, cfg.cluster)

        yield FrameResult(
            frame_id=frame_id,
            lidar_detections=tuple(lidar_dets),
            camera_detections=tuple(camera_dets),
            fused_detections=tuple(fused),
            front_guard_detections=tuple(guard),
            stage_ms=stage_ms,
            lidar_raw=tuple(lidar_raw),
        )


def paired_frames_from_results(
    results: Sequence[FrameResult], truth: dict[int, list[TruthObject]]
) -> list[PairedFrame]:
    """Bundle cached sensor outputs with truth for the grid search."""
    return [
        PairedFrame(
            frame_id=r.frame_id,
            lidar_raw=r.lidar_raw,
            camera=r.camera_detections,
            truth=tuple(truth.get(r.frame_id, [])),
        )
        for r in results
    ]


# ---------------------------------------------------------------------------
# Training-set assembly
# ---------------------------------------------------------------------------


def label_clusters_against_truth(
    clusters_xy: Sequence[tuple[float, float]],
    truth: Sequence[TruthObject],
    gate: float,
) -> list[bool]:
    """A cluster is a beacon example iff a truth beacon sits within the gate."""
    labels = []
    for cx, cy in clusters_xy:
        is_beacon = False
        for obj in truth:
            ox, oy = obj.xy
            if math.hypot(cx - ox, cy - oy) <= gate and obj.is_beacon:
                is_beacon = True
                break
        labels.append(is_beacon)
    return labels


def build_training_set(
    clouds: Iterable[PointCloud],
    truth: dict[int, list[TruthObject]],
    cfg: PipelineConfig,
) -> tuple[list[FeatureVector], list[bool]]:
    """Extract per-cluster features and truth-matched labels from frames."""
    features: list[FeatureVector] = []
    labels: list[bool] = []
    for cloud in clouds:
        _, bright, low = preprocess(cloud, cfg.preprocess)
        clusters = cluster_bright_points(bright, cfg.cluster)
        if not clusters:
            continue
        frame_truth = truth.get(cloud.frame_id, [])
        cluster_labels = label_clusters_against_truth(
            [c.centroid for c in clusters], frame_truth, cfg.distance_gate
        )
        for cluster, is_beacon in zip(clusters, cluster_labels):
            cx, cy = cluster.centroid
            features.append(extract_features(bright, low, (cx, cy, 0.0), cfg.region))
            labels.append(is_beacon)
    return features, labels


# ---------------------------------------------------------------------------
# Timing output
# ---------------------------------------------------------------------------


def write_timings_csv(path: str | Path, results: Sequence[FrameResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_id", *STAGES, "total_ms"])
        for r in results:
            row = [r.frame_id] + [f"{r.stage_ms.get(s, 0.0):.3f}" for s in STAGES]
            row.append(f"{r.total_ms:.3f}")
            writer.writerow(row)


def median_frame_ms(results: Sequence[FrameResult]) -> float:
    totals = sorted(r.total_ms for r in results)
    if not totals:
        return 0.0
    mid = len(totals) // 2
    if len(totals) % 2:
        return totals[mid]
    return (totals[mid - 1] + totals[mid]) / 2.0

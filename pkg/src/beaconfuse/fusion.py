"""Detection fusion: association, fuzzy confidence combination, metrics.

Matched camera/LiDAR detections keep the LiDAR position (it is far more
accurate) and get a fused confidence from a five-rule Mamdani system over
the two sensor scores.  Unmatched detections pass through unchanged, and
everything below the confidence threshold is dropped at the end.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import SigmoidConfig, pseudo_confidence
from .records import Detection, TruthObject

FUZZY_RESOLUTION = 1001


@dataclass(frozen=True)
class FusionConfig:
    angle_threshold: float = 3.0
    confidence_threshold: float = 0.65
    alpha: float = 1.0 / 500_000.0

    def __post_init__(self):
        if self.angle_threshold <= 0:
            raise ValueError(f"angle_threshold must be > 0, got {self.angle_threshold}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


# ---------------------------------------------------------------------------
# Fuzzy inference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FuzzySet:
    """Triangular membership with vertices (a, b, c); a == b or b == c
    degenerates into a shoulder."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not self.a <= self.b <= self.c:
            raise ValueError(f"vertices must satisfy a <= b <= c, got {(self.a, self.b, self.c)}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.b > self.a:
            up = np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)
        else:
            up = (x >= self.b).astype(float)
        if self.c > self.b:
            down = np.clip((self.c - x) / (self.c - self.b), 0.0, 1.0)
        else:
            down = (x <= self.b).astype(float)
        return np.minimum(up, down)


# Level partition on the [0, 100] score domain.  The medium set spans the
# whole domain so middling scores blend smoothly with both neighbours;
# this calibration pins the anchor behavior (80, 20) -> ~56.
DEFAULT_LEVELS = {
    "low": FuzzySet(0.0, 0.0, 50.0),
    "medium": FuzzySet(0.0, 50.0, 100.0),
    "high": FuzzySet(50.0, 100.0, 100.0),
}

# (lidar level, camera level, output level); None means the rule ignores
# that sensor.
DEFAULT_RULES = (
    ("high", None, "high"),
    (None, "high", "high"),
    ("medium", None, "medium"),
    ("low", "medium", "medium"),
    ("low", "low", "low"),
)


class FuzzySystem:
    """Mamdani system: min activation, max aggregation, centroid defuzzing."""

    def __init__(
        self,
        lidar_sets: dict[str, FuzzySet] | None = None,
        camera_sets: dict[str, FuzzySet] | None = None,
        output_sets: dict[str, FuzzySet] | None = None,
        rules: Sequence[tuple[str | None, str | None, str]] = DEFAULT_RULES,
        resolution: int = FUZZY_RESOLUTION,
    ):
        self.lidar_sets = dict(lidar_sets or DEFAULT_LEVELS)
        self.camera_sets = dict(camera_sets or DEFAULT_LEVELS)
        self.output_sets = dict(output_sets or DEFAULT_LEVELS)
        self.rules = tuple(rules)
        self.grid = np.linspace(0.0, 100.0, resolution)
        self._output_grids = {
            name: fset(self.grid) for name, fset in self.output_sets.items()
        }
        for lidar_level, camera_level, out_level in self.rules:
            if lidar_level is not None and lidar_level not in self.lidar_sets:
                raise ValueError(f"rule references unknown lidar level {lidar_level!r}")
            if camera_level is not None and camera_level not in self.camera_sets:
                raise ValueError(f"rule references unknown camera level {camera_level!r}")
            if out_level not in self.output_sets:
                raise ValueError(f"rule references unknown output level {out_level!r}")

    def to_dict(self) -> dict:
        def sets_doc(sets: dict[str, FuzzySet]) -> dict:
            return {name: [s.a, s.b, s.c] for name, s in sets.items()}

        return {
            "lidar_sets": sets_doc(self.lidar_sets),
            "camera_sets": sets_doc(self.camera_sets),
            "output_sets": sets_doc(self.output_sets),
            "rules": [list(rule) for rule in self.rules],
            "resolution": int(self.grid.size),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FuzzySystem":
        def sets_from(doc_sets: dict) -> dict[str, FuzzySet]:
            return {name: FuzzySet(*verts) for name, verts in doc_sets.items()}

        return cls(
            lidar_sets=sets_from(doc["lidar_sets"]),
            camera_sets=sets_from(doc["camera_sets"]),
            output_sets=sets_from(doc["output_sets"]),
            rules=tuple(tuple(rule) for rule in doc["rules"]),
            resolution=int(doc["resolution"]),
        )


def save_fuzzy_config(path: str | Path, system: FuzzySystem) -> None:
    Path(path).write_text(json.dumps(system.to_dict(), indent=2))


def load_fuzzy_config(path: str | Path) -> FuzzySystem:
    return FuzzySystem.from_dict(json.loads(Path(path).read_text()))


def fuzzy_fuse(lidar_score: float, camera_score: float, system: FuzzySystem) -> float:
    """Combine two [0, 100] sensor scores into one [0, 100] detection score."""
    if not 0.0 <= lidar_score <= 100.0:
        raise ValueError(f"lidar_score must be in [0, 100], got {lidar_score}")
    if not 0.0 <= camera_score <= 100.0:
        raise ValueError(f"camera_score must be in [0, 100], got {camera_score}")
    aggregate = np.zeros_like(system.grid)
    for lidar_level, camera_level, out_level in system.rules:
        activation = 1.0
        if lidar_level is not None:
            activation = min(activation, float(system.lidar_sets[lidar_level](lidar_score)))
        if camera_level is not None:
            activation = min(activation, float(system.camera_sets[camera_level](camera_score)))
        if activation > 0.0:
            np.maximum(
                aggregate,
                np.minimum(activation, system._output_grids[out_level]),
                out=aggregate,
            )
    mass = aggregate.sum()
    if mass == 0.0:
        return 0.0
    return float((system.grid * aggregate).sum() / mass)


# ---------------------------------------------------------------------------
# Association and frame fusion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssociationResult:
    pairs: tuple[tuple[int, int], ...]          # (camera index, lidar index)
    unmatched_camera: tuple[int, ...]
    unmatched_lidar: tuple[int, ...]


def associate(
    camera: Sequence[Detection], lidar: Sequence[Detection], angle_threshold: float
) -> AssociationResult:
    """Greedy one-to-one matching, camera-driven.

    Each camera detection, in order, takes the still-unmatched LiDAR
    detection with the smallest absolute angle difference, provided the
    difference is below the threshold.
    """
    taken = [False] * len(lidar)
    pairs = []
    unmatched_camera = []
    for ci, cam in enumerate(camera):
        best_li = -1
        best_diff = math.inf
        for li, lid in enumerate(lidar):
            if taken[li]:
                continue
            diff = abs(cam.angle - lid.angle)
            if diff < best_diff:
                best_diff = diff
                best_li = li
        if best_li >= 0 and best_diff < angle_threshold:
            taken[best_li] = True
            pairs.append((ci, best_li))
        else:
            unmatched_camera.append(ci)
    unmatched_lidar = [li for li, used in enumerate(taken) if not used]
    return AssociationResult(
        pairs=tuple(pairs),
        unmatched_camera=tuple(unmatched_camera),
        unmatched_lidar=tuple(unmatched_lidar),
    )


def fuse_frame(
    camera: Sequence[Detection],
    lidar: Sequence[Detection],
    cfg: FusionConfig,
    system: FuzzySystem | None = None,
) -> list[Detection]:
    """Fuse one frame's detections and drop everything below the threshold.

    Confidences arrive in [0, 1] and are scaled to the fuzzy [0, 100]
    domain internally.  Matched pairs keep the LiDAR position.
    """
    if system is None:
        system = FuzzySystem()
    assoc = associate(camera, lidar, cfg.angle_threshold)
    fused: list[Detection] = []
    for ci, li in assoc.pairs:
        score = fuzzy_fuse(lidar[li].confidence * 100.0, camera[ci].confidence * 100.0, system)
        fused.append(
            Detection(
                distance=lidar[li].distance,
                angle=lidar[li].angle,
                confidence=score / 100.0,
                source="fused",
            )
        )
    for ci in assoc.unmatched_camera:
        fused.append(camera[ci])
    for li in assoc.unmatched_lidar:
        fused.append(lidar[li])
    return [det for det in fused if det.confidence >= cfg.confidence_threshold]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def tpr(self) -> float:
        if self.tp + self.fn == 0:
            raise ValueError("TPR undefined: no positive objects in the truth")
        return self.tp / (self.tp + self.fn)

    @property
    def fpr(self) -> float:
        if self.fp + self.tn == 0:
            return 0.0
        return self.fp / (self.fp + self.tn)

    @property
    def fnr(self) -> float:
        if self.tp + self.fn == 0:
            raise ValueError("FNR undefined: no positive objects in the truth")
        return self.fn / (self.tp + self.fn)


def _match_frame(
    detections: Sequence[Detection], truth: Sequence[TruthObject], gate: float
) -> list[tuple[int, int]]:
    """One-to-one nearest-position matching within the gate distance."""
    candidates = []
    for di, det in enumerate(detections):
        dx, dy = det.xy
        for ti, obj in enumerate(truth):
            ox, oy = obj.xy
            dist = math.hypot(dx - ox, dy - oy)
            if dist <= gate:
                candidates.append((dist, di, ti))
    candidates.sort()
    det_used = set()
    truth_used = set()
    matches = []
    for _, di, ti in candidates:
        if di in det_used or ti in truth_used:
            continue
        det_used.add(di)
        truth_used.add(ti)
        matches.append((di, ti))
    return matches


def detection_metrics(
    frames_detections: Sequence[Sequence[Detection]],
    frames_truth: Sequence[Sequence[TruthObject]],
    gate: float = 1.0,
) -> DetectionMetrics:
    """Aggregate confusion counts over aligned frame lists.

    A detection matched to a beacon is a true positive; matched to any
    other object, or matched to nothing, it is a false positive.  Unseen
    beacons are false negatives; unseen non-beacons are true negatives.
    """
    if len(frames_detections) != len(frames_truth):
        raise ValueError("detections and truth must cover the same frames")
    tp = fp = fn = tn = 0
    for detections, truth in zip(frames_detections, frames_truth):
        matches = _match_frame(detections, truth, gate)
        matched_dets = {di for di, _ in matches}
        matched_truth = {ti for _, ti in matches}
        for di, ti in matches:
            if truth[ti].is_beacon:
                tp += 1
            else:
                fp += 1
        fp += len(detections) - len(matched_dets)
        for ti, obj in enumerate(truth):
            if ti in matched_truth:
                continue
            if obj.is_beacon:
                fn += 1
            else:
                tn += 1
    return DetectionMetrics(tp=tp, fp=fp, fn=fn, tn=tn)


def mean_position_error(
    frames_detections: Sequence[Sequence[Detection]],
    frames_truth: Sequence[Sequence[TruthObject]],
    gate: float = 1.0,
) -> float:
    """Mean Euclidean error of detections matched to beacon truth objects.

    Returns NaN when nothing matched.
    """
    errors = []
    for detections, truth in zip(frames_detections, frames_truth):
        for di, ti in _match_frame(detections, truth, gate):
            if truth[ti].is_beacon:
                dx, dy = detections[di].xy
                ox, oy = truth[ti].xy
                errors.append(math.hypot(dx - ox, dy - oy))
    return float(np.mean(errors)) if errors else float("nan")


# ---------------------------------------------------------------------------
# Hyperparameter grid search
# ---------------------------------------------------------------------------

# Sigmoid gains and confidence thresholds explored by the search.
GRID_ALPHAS = (
    1 / 100, 1 / 500, 1 / 1_000, 1 / 5_000, 1 / 10_000,
    1 / 50_000, 1 / 100_000, 1 / 500_000, 1 / 1_000_000,
)
GRID_CS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)


@dataclass(frozen=True)
class LidarRawDetection:
    """LiDAR beacon candidate before confidence squashing."""

    distance: float
    angle: float
    discriminant: float


@dataclass(frozen=True)
class PairedFrame:
    """Cached per-frame sensor outputs that do not depend on (alpha, C)."""

    frame_id: int
    lidar_raw: tuple[LidarRawDetection, ...]
    camera: tuple[Detection, ...]
    truth: tuple[TruthObject, ...]


@dataclass(frozen=True)
class GridCell:
    alpha: float
    c: float
    tpr: float
    fpr: float

    @property
    def ks(self) -> float:
        return self.tpr - self.fpr


@dataclass(frozen=True)
class GridSearchResult:
    best_alpha: float
    best_c: float
    cells: tuple[GridCell, ...]


def lidar_detections_for_alpha(
    lidar_raw: Sequence[LidarRawDetection], alpha: float
) -> list[Detection]:
    cfg = SigmoidConfig(alpha=alpha)
    return [
        Detection(
            distance=raw.distance,
            angle=raw.angle,
            confidence=pseudo_confidence(raw.discriminant, cfg),
            source="lidar",
        )
        for raw in lidar_raw
    ]


def evaluate_cell(
    frames: Sequence[PairedFrame],
    alpha: float,
    c: float,
    angle_threshold: float,
    system: FuzzySystem,
    gate: float = 1.0,
) -> GridCell:
    cfg = FusionConfig(angle_threshold=angle_threshold, confidence_threshold=c, alpha=alpha)
    fused_frames = []
    truth_frames = []
    for frame in frames:
        lidar = lidar_detections_for_alpha(frame.lidar_raw, alpha)
        fused_frames.append(fuse_frame(frame.camera, lidar, cfg, system))
        truth_frames.append(frame.truth)
    metrics = detection_metrics(fused_frames, truth_frames, gate=gate)
    return GridCell(alpha=alpha, c=c, tpr=metrics.tpr, fpr=metrics.fpr)


def grid_search(
    frames: Sequence[PairedFrame],
    alphas: Sequence[float] = GRID_ALPHAS,
    cs: Sequence[float] = GRID_CS,
    angle_threshold: float = 3.0,
    system: FuzzySystem | None = None,
    gate: float = 1.0,
) -> GridSearchResult:
    """Exhaustively score every (alpha, C) cell by TPR minus FPR.

    Ties prefer the larger C, then the larger alpha, so the result is
    deterministic for any input.
    """
    if not alphas or not cs:
        raise ValueError("alpha and C grids must be nonempty")
    if system is None:
        system = FuzzySystem()
    cells = []
    for alpha in alphas:
        for c in cs:
            cells.append(evaluate_cell(frames, alpha, c, angle_threshold, system, gate))
    best = max(cells, key=lambda cell: (cell.ks, cell.c, cell.alpha))
    return GridSearchResult(best_alpha=best.alpha, best_c=best.c, cells=tuple(cells))


HEATMAP_HEADER = ["alpha", "C", "tpr", "fpr", "ks"]


def write_heatmap_csv(path: str | Path, result: GridSearchResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEATMAP_HEADER)
        for cell in result.cells:
            writer.writerow(
                [repr(float(cell.alpha)), repr(float(cell.c)), repr(float(cell.tpr)),
                 repr(float(cell.fpr)), repr(float(cell.ks))]
            )


def write_heatmap_matrices(out_dir: str | Path, result: GridSearchResult) -> None:
    """Three matrix-form CSVs (rows = alpha, columns = C)."""
    out_dir = Path(out_dir)
    alphas = sorted({cell.alpha for cell in result.cells})
    cs = sorted({cell.c for cell in result.cells})
    by_key = {(cell.alpha, cell.c): cell for cell in result.cells}
    for name, getter in (
        ("tpr_matrix.csv", lambda cell: cell.tpr),
        ("fpr_matrix.csv", lambda cell: cell.fpr),
        ("ks_matrix.csv", lambda cell: cell.ks),
    ):
        with open(out_dir / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha"] + [repr(c) for c in cs])
            for alpha in alphas:
                writer.writerow([repr(alpha)] + [repr(getter(by_key[(alpha, c)])) for c in cs])

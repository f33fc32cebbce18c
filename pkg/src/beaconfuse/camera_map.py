"""Camera bounding-box to LiDAR-frame (distance, angle) mapping.

A fixed-topology fully-connected network learns the projection from
normalized box coordinates to range and azimuth; ordinary least-squares
baselines (linear for angle, exponential for distance) provide the
reference fits the network is expected to beat.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .records import Detection

# Input (4 box features), two wide hidden layers, eight narrow ones, two outputs.
LAYER_WIDTHS = (4, 20, 20, 10, 10, 10, 10, 10, 10, 10, 10, 2)

DISTANCE_SCALE = 40.0
ANGLE_SCALE = 20.0


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box with a detector confidence."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    confidence: float
    image_width: int = 640
    image_height: int = 480

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError("box must have xmin < xmax and ymin < ymax")
        if self.xmin < 0 or self.ymin < 0 or self.xmax > self.image_width or self.ymax > self.image_height:
            raise ValueError("box must lie within the image bounds")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def bbox_features(box: BoundingBox) -> np.ndarray:
    """(xmin, xmax, width, height), each normalized to [0, 1] by image size."""
    return np.array(
        [
            box.xmin / box.image_width,
            box.xmax / box.image_width,
            (box.xmax - box.xmin) / box.image_width,
            (box.ymax - box.ymin) / box.image_height,
        ]
    )


@dataclass(frozen=True)
class MapperNetwork:
    """Fully-connected mapper with fixed layer widths and tanh hidden units."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    input_mean: np.ndarray
    input_std: np.ndarray
    activation: str = "tanh"
    distance_scale: float = DISTANCE_SCALE
    angle_scale: float = ANGLE_SCALE

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        expected = list(zip(LAYER_WIDTHS[1:], LAYER_WIDTHS[:-1]))
        shapes = [w.shape for w, _ in self.layers]
        if shapes != expected:
            raise ValueError(f"layer shapes {shapes} do not match the fixed topology {expected}")
        for w, b in self.layers:
            if b.shape != (w.shape[0],):
                raise ValueError("bias shape must match layer output width")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("network parameters must be finite")
        if self.input_mean.shape != (LAYER_WIDTHS[0],) or self.input_std.shape != (LAYER_WIDTHS[0],):
            raise ValueError("input scaling constants must have one entry per input")


def _forward(
    layers: Sequence[tuple[np.ndarray, np.ndarray]], x: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass; returns output and the per-layer activations."""
    activations = [x]
    a = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = z if i == last else np.tanh(z)
        activations.append(a)
    return a, activations


def _loss_and_gradients(
    layers: Sequence[tuple[np.ndarray, np.ndarray]], x: np.ndarray, y: np.ndarray
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean squared error over all outputs, with analytic parameter gradients."""
    pred, activations = _forward(layers, x)
    diff = pred - y
    loss = float((diff**2).mean())
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    delta = 2.0 * diff / diff.size
    for i in range(len(layers) - 1, -1, -1):
        a_prev = activations[i]
        grads[i] = (delta.T @ a_prev, delta.sum(axis=0))
        if i > 0:
            w, _ = layers[i]
            delta = (delta @ w) * (1.0 - activations[i] ** 2)
    return loss, grads


def _init_layers(rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for fan_out, fan_in in zip(LAYER_WIDTHS[1:], LAYER_WIDTHS[:-1]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        layers.append((w, b))
    return layers


def _scaled_targets(targets: np.ndarray) -> np.ndarray:
    return targets / np.array([DISTANCE_SCALE, ANGLE_SCALE])


def train_mapper(
    pairs: Sequence[tuple[BoundingBox, tuple[float, float]]],
    learning_rate: float = 1e-3,
    epochs: int = 6_000,
    seed: int = 0,
) -> MapperNetwork:
    """Fit the mapper on (box, (distance_m, angle_deg)) pairs.

    Full-batch Adam with a fixed step on standardized inputs and scaled
    targets; training is deterministic for a given seed.
    """
    if len(pairs) < 100:
        raise ValueError(f"need at least 100 training pairs, got {len(pairs)}")
    x_raw = np.stack([bbox_features(box) for box, _ in pairs])
    targets = np.array([[d, a] for _, (d, a) in pairs], dtype=float)
    input_mean = x_raw.mean(axis=0)
    input_std = x_raw.std(axis=0)
    if np.any(input_std <= 0):
        raise ValueError("degenerate training data: a box feature never varies")
    x = (x_raw - input_mean) / input_std
    y = _scaled_targets(targets)

    rng = np.random.default_rng(seed)
    layers = _init_layers(rng)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
    for step in range(1, epochs + 1):
        _, grads = _loss_and_gradients(layers, x, y)
        bias1 = 1.0 - beta1**step
        bias2 = 1.0 - beta2**step
        new_layers = []
        for i, ((w, b), (gw, gb)) in enumerate(zip(layers, grads)):
            mw, mb = m[i]
            vw, vb = v[i]
            mw = beta1 * mw + (1 - beta1) * gw
            mb = beta1 * mb + (1 - beta1) * gb
            vw = beta2 * vw + (1 - beta2) * gw**2
            vb = beta2 * vb + (1 - beta2) * gb**2
            m[i] = (mw, mb)
            v[i] = (vw, vb)
            w = w - learning_rate * (mw / bias1) / (np.sqrt(vw / bias2) + eps)
            b = b - learning_rate * (mb / bias1) / (np.sqrt(vb / bias2) + eps)
            new_layers.append((w, b))
        layers = new_layers
    return MapperNetwork(
        layers=tuple((w.copy(), b.copy()) for w, b in layers),
        input_mean=input_mean,
        input_std=input_std,
    )


def mapper_forward(network: MapperNetwork, boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Batch prediction: rows of (distance_m, angle_deg)."""
    x_raw = np.stack([bbox_features(b) for b in boxes])
    x = (x_raw - network.input_mean) / network.input_std
    pred, _ = _forward(network.layers, x)
    return pred * np.array([network.distance_scale, network.angle_scale])


def predict(network: MapperNetwork, box: BoundingBox) -> Detection:
    """Map one bounding box to a polar detection; confidence passes through."""
    out = mapper_forward(network, [box])[0]
    return Detection(
        distance=max(0.0, float(out[0])),
        angle=float(out[1]),
        confidence=box.confidence,
        source="camera",
    )


@dataclass(frozen=True)
class RegressionBaselines:
    """Least-squares reference fits: angle linear in the box x-center,
    distance exponential in the box width."""

    linear_slope: float
    linear_intercept: float
    exp_a: float
    exp_b: float

    def predict_angle(self, box: BoundingBox) -> float:
        f = bbox_features(box)
        center = (f[0] + f[1]) / 2.0
        return self.linear_slope * center + self.linear_intercept

    def predict_distance(self, box: BoundingBox) -> float:
        f = bbox_features(box)
        return self.exp_a * math.exp(self.exp_b * f[2])


def fit_baselines(pairs: Sequence[tuple[BoundingBox, tuple[float, float]]]) -> RegressionBaselines:
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 pairs, got {len(pairs)}")
    feats = np.stack([bbox_features(box) for box, _ in pairs])
    dist = np.array([d for _, (d, _) in pairs], dtype=float)
    angle = np.array([a for _, (_, a) in pairs], dtype=float)
    if np.any(dist <= 0):
        raise ValueError("exponential distance fit requires all distances > 0")
    centers = (feats[:, 0] + feats[:, 1]) / 2.0
    design = np.column_stack([centers, np.ones_like(centers)])
    (slope, intercept), *_ = np.linalg.lstsq(design, angle, rcond=None)
    widths = np.column_stack([feats[:, 2], np.ones_like(centers)])
    (b, log_a), *_ = np.linalg.lstsq(widths, np.log(dist), rcond=None)
    return RegressionBaselines(
        linear_slope=float(slope),
        linear_intercept=float(intercept),
        exp_a=float(math.exp(log_a)),
        exp_b=float(b),
    )


def mapping_metrics(
    predictions: Sequence[tuple[float, float]], truths: Sequence[tuple[float, float]]
) -> tuple[float, float, float, float]:
    """(mse_distance, mse_angle, r2_distance, r2_angle)."""
    if len(predictions) == 0 or len(predictions) != len(truths):
        raise ValueError("predictions and truths must be nonempty and equal-length")
    pred = np.asarray(predictions, dtype=float)
    true = np.asarray(truths, dtype=float)
    mse = ((pred - true) ** 2).mean(axis=0)
    ss_tot = ((true - true.mean(axis=0)) ** 2).sum(axis=0)
    if np.any(ss_tot == 0):
        raise ValueError("r2 undefined: zero variance in the ground truth")
    ss_res = ((pred - true) ** 2).sum(axis=0)
    r2 = 1.0 - ss_res / ss_tot
    return float(mse[0]), float(mse[1]), float(r2[0]), float(r2[1])


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_mapper(path: str | Path, network: MapperNetwork) -> None:
    doc = {
        "layers": [
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "w": [float(v) for v in w.ravel()],
                "b": [float(v) for v in b],
            }
            for w, b in network.layers
        ],
        "activation": network.activation,
        "scales": {
            "input_mean": [float(v) for v in network.input_mean],
            "input_std": [float(v) for v in network.input_std],
            "distance": network.distance_scale,
            "angle": network.angle_scale,
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_mapper(path: str | Path) -> MapperNetwork:
    doc = json.loads(Path(path).read_text())
    layers = tuple(
        (
            np.asarray(entry["w"], dtype=float).reshape(entry["rows"], entry["cols"]),
            np.asarray(entry["b"], dtype=float),
        )
        for entry in doc["layers"]
    )
    scales = doc["scales"]
    return MapperNetwork(
        layers=layers,
        input_mean=np.asarray(scales["input_mean"], dtype=float),
        input_std=np.asarray(scales["input_std"], dtype=float),
        activation=doc["activation"],
        distance_scale=float(scales["distance"]),
        angle_scale=float(scales["angle"]),
    )


PAIRS_HEADER = ["xmin", "ymin", "xmax", "ymax", "conf", "dist_m", "angle_deg"]


def write_pairs_csv(
    path: str | Path, pairs: Sequence[tuple[BoundingBox, tuple[float, float]]]
) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAIRS_HEADER)
        for box, (d, a) in pairs:
            writer.writerow(
                [repr(float(box.xmin)), repr(float(box.ymin)), repr(float(box.xmax)),
                 repr(float(box.ymax)), repr(float(box.confidence)), repr(float(d)),
                 repr(float(a))]
            )


def read_pairs_csv(
    path: str | Path, image_width: int = 640, image_height: int = 480
) -> list[tuple[BoundingBox, tuple[float, float]]]:
    import csv

    pairs = []
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
            pairs.append((box, (float(row["dist_m"]), float(row["angle_deg"]))))
    return pairs

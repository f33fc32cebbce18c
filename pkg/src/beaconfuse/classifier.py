"""Linear SVM beacon classifier and the confidence squashing function.

The trainer minimizes average hinge loss plus an L2 penalty over
normalized features, via dual coordinate descent with shrinking.  Labels
are oriented so beacon-like inputs produce a discriminant at or below
zero; the squashing sigmoid then negates the discriminant so beacon-like
inputs map above 0.5.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import (
    FeatureNormalizer,
    FeatureVector,
    fit_normalizer,
    stack_features,
)

BEACON = "beacon"
NON_BEACON = "non_beacon"

# Internal label encoding: beacons train as -1 so their discriminant is negative.
_BEACON_Y = -1.0
_NON_BEACON_Y = +1.0

SOLVER_TOL = 1e-6
MAX_EPOCHS = 100_000


@dataclass(frozen=True)
class LinearSvmModel:
    weights: tuple[float, ...]
    bias: float
    normalizer: FeatureNormalizer

    def __post_init__(self):
        if not all(math.isfinite(w) for w in self.weights) or not math.isfinite(self.bias):
            raise ValueError("model parameters must be finite")


@dataclass(frozen=True)
class SigmoidConfig:
    alpha: float = 1.0 / 500_000.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


def _as_matrix(features: Sequence[FeatureVector] | np.ndarray) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=float)
    return stack_features(list(features))


def _as_bool_labels(labels: Sequence) -> np.ndarray:
    out = []
    for item in labels:
        if isinstance(item, str):
            if item not in (BEACON, NON_BEACON):
                raise ValueError(f"unknown label {item!r}")
            out.append(item == BEACON)
        else:
            out.append(bool(item))
    return np.asarray(out, dtype=bool)


def train_svm(
    features: Sequence[FeatureVector] | np.ndarray,
    is_beacon: Sequence,
    regularization: float = 1.0,
    tol: float = SOLVER_TOL,
    max_epochs: int = MAX_EPOCHS,
    seed: int = 0,
) -> LinearSvmModel:
    """Fit the classifier on raw (unnormalized) feature rows.

    The normalizer is fit on this data and stored with the model; every
    later evaluation goes through it.  ``regularization`` is the
    per-sample hinge cost (larger fits harder).
    """
    matrix = _as_matrix(features)
    labels = _as_bool_labels(is_beacon)
    if matrix.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree in length")
    if matrix.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if labels.all() or not labels.any():
        raise ValueError("both classes must be present in the training data")
    if regularization <= 0:
        raise ValueError("regularization must be > 0")

    normalizer = fit_normalizer(matrix)
    x = normalizer.transform(matrix)
    y = np.where(labels, _BEACON_Y, _NON_BEACON_Y)
    theta = _dual_coordinate_descent(x, y, regularization, tol, max_epochs, seed)
    return LinearSvmModel(
        weights=tuple(float(w) for w in theta[:-1]),
        bias=float(theta[-1]),
        normalizer=normalizer,
    )


def _dual_coordinate_descent(
    x: np.ndarray, y: np.ndarray, cost: float, tol: float, max_epochs: int, seed: int
) -> np.ndarray:
    """Box-constrained dual solver for the L2-regularized hinge objective.

    The bias is handled by augmenting each row with a constant 1, so it is
    regularized along with the weights.  Shrinking temporarily drops
    samples whose multipliers are pinned at a bound with a strongly
    feasible gradient.
    """
    n = x.shape[0]
    aug = np.hstack([x, np.ones((n, 1))])
    sq_norms = np.einsum("ij,ij->i", aug, aug)
    alpha = np.zeros(n)
    theta = np.zeros(aug.shape[1])
    rng = np.random.default_rng(seed)

    active = np.arange(n)
    shrink_hi = np.inf
    shrink_lo = -np.inf
    for _ in range(max_epochs):
        order = active[rng.permutation(active.size)]
        max_pg = 0.0
        min_pg = 0.0
        next_hi = -np.inf
        next_lo = np.inf
        removed = []
        for i in order:
            grad = y[i] * float(aug[i] @ theta) - 1.0
            a = alpha[i]
            if a <= 0.0:
                if grad > shrink_hi:
                    removed.append(i)
                    continue
                pg = min(grad, 0.0)
            elif a >= cost:
                if grad < shrink_lo:
                    removed.append(i)
                    continue
                pg = max(grad, 0.0)
            else:
                pg = grad
            next_hi = max(next_hi, pg)
            next_lo = min(next_lo, pg)
            if pg != 0.0:
                max_pg = max(max_pg, pg)
                min_pg = min(min_pg, pg)
                new_a = min(max(a - grad / sq_norms[i], 0.0), cost)
                if new_a != a:
                    theta += (new_a - a) * y[i] * aug[i]
                    alpha[i] = new_a
        if removed:
            keep = np.isin(active, np.asarray(removed), invert=True)
            active = active[keep]
        gap = max_pg - min_pg
        if gap <= tol:
            if active.size == n:
                break
            # Converged on the shrunk problem; re-check every sample.
            active = np.arange(n)
            shrink_hi = np.inf
            shrink_lo = -np.inf
        else:
            shrink_hi = max(next_hi, 0.0)
            shrink_lo = min(next_lo, 0.0)
    return theta


def hinge_objective(
    model: LinearSvmModel,
    features: Sequence[FeatureVector] | np.ndarray,
    is_beacon: Sequence,
    regularization: float = 1.0,
) -> float:
    """Average hinge loss plus the matching L2 penalty for this model."""
    matrix = _as_matrix(features)
    labels = _as_bool_labels(is_beacon)
    x = model.normalizer.transform(matrix)
    y = np.where(labels, _BEACON_Y, _NON_BEACON_Y)
    theta = np.asarray(model.weights + (model.bias,))
    margins = y * (x @ theta[:-1] + theta[-1])
    hinge = np.maximum(0.0, 1.0 - margins).mean()
    n = matrix.shape[0]
    return float(hinge + theta @ theta / (2.0 * regularization * n))


def discriminant(model: LinearSvmModel, f_raw: FeatureVector | np.ndarray) -> float:
    values = f_raw.as_array() if isinstance(f_raw, FeatureVector) else np.asarray(f_raw, dtype=float)
    normalized = model.normalizer.transform(values)
    return float(normalized @ np.asarray(model.weights) + model.bias)


def classify(model: LinearSvmModel, f_raw: FeatureVector | np.ndarray) -> str:
    return BEACON if discriminant(model, f_raw) <= 0.0 else NON_BEACON


def pseudo_confidence(d: float, cfg: SigmoidConfig) -> float:
    """Squash a discriminant into (0, 1); beacon-like (negative) maps above 0.5."""
    return 1.0 / (1.0 + math.exp(min(cfg.alpha * d, 700.0)))


def svm_confusion(
    model: LinearSvmModel,
    features: Sequence[FeatureVector] | np.ndarray,
    is_beacon: Sequence,
) -> tuple[int, int, int, int]:
    """Counts (tp, tn, fp, fn) with beacons as the positive class."""
    matrix = _as_matrix(features)
    labels = _as_bool_labels(is_beacon)
    x = model.normalizer.transform(matrix)
    d = x @ np.asarray(model.weights) + model.bias
    predicted = d <= 0.0
    tp = int((predicted & labels).sum())
    tn = int((~predicted & ~labels).sum())
    fp = int((predicted & ~labels).sum())
    fn = int((~predicted & labels).sum())
    return tp, tn, fp, fn


def save_model(path: str | Path, model: LinearSvmModel, sigmoid: SigmoidConfig) -> None:
    doc = {
        "w": list(model.weights),
        "b": model.bias,
        "mu": list(model.normalizer.mu),
        "sigma": list(model.normalizer.sigma),
        "alpha": sigmoid.alpha,
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_model(path: str | Path) -> tuple[LinearSvmModel, SigmoidConfig]:
    doc = json.loads(Path(path).read_text())
    model = LinearSvmModel(
        weights=tuple(float(w) for w in doc["w"]),
        bias=float(doc["b"]),
        normalizer=FeatureNormalizer(
            mu=tuple(float(v) for v in doc["mu"]),
            sigma=tuple(float(v) for v in doc["sigma"]),
        ),
    )
    return model, SigmoidConfig(alpha=float(doc["alpha"]))

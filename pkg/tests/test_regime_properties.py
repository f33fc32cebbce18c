"""Regime-level properties that need the session-trained models."""

import math

import numpy as np
import pytest

from beaconfuse.camera_map import mapper_forward, predict
from beaconfuse.classifier import discriminant
from beaconfuse.features import stack_features
from beaconfuse.simulator import CameraModel, make_beacon, render_camera


def test_discriminant_histograms_nearly_separate(svm_data, svm_model):
    """The two class-conditional discriminant distributions overlap in
    less than 5% of their mass."""
    feats, labels = svm_data["train"]
    matrix = stack_features(feats)
    labels = np.asarray(labels, dtype=bool)
    d = np.array([discriminant(svm_model, row) for row in matrix])
    bins = np.linspace(d.min(), d.max(), 81)
    beacon_pdf, _ = np.histogram(d[labels], bins=bins, density=True)
    other_pdf, _ = np.histogram(d[~labels], bins=bins, density=True)
    overlap = float(np.minimum(beacon_pdf, other_pdf).sum() * (bins[1] - bins[0]))
    assert overlap < 0.05

    # Beacons sit on the negative side.
    assert np.median(d[labels]) < 0 < np.median(d[~labels])


def test_largest_angle_errors_sit_at_the_fov_edges(clean_mapper_pairs, mapper_model):
    holdout = clean_mapper_pairs[1500:]
    pred = mapper_forward(mapper_model, [box for box, _ in holdout])
    true = np.asarray([target for _, target in holdout])
    err = np.abs(pred[:, 1] - true[:, 1])
    nbins = 8
    bins = np.linspace(-20.0, 20.0, nbins + 1)
    idx = np.clip(np.digitize(true[:, 1], bins) - 1, 0, nbins - 1)
    means = [float(err[idx == b].mean()) for b in range(nbins)]
    assert int(np.argmax(means)) in (0, nbins - 1)


def test_prediction_at_known_pose(mapper_model):
    cam = CameraModel(pixel_noise=0.0, confidence_noise=0.0, miss_rate=0.0)
    obj = make_beacon(10.0 * math.cos(math.radians(5.0)), 10.0 * math.sin(math.radians(5.0)))
    tag = render_camera([obj], cam, seed=9)[0]
    det = predict(mapper_model, tag.box)
    assert det.distance == pytest.approx(10.0, abs=0.5)
    assert det.angle == pytest.approx(5.0, abs=1.0)

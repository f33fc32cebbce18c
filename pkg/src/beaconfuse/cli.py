"""Command-line harness: simulate, train, run, evaluate, grid-search."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import camera_map, classifier, features, fusion, plots
from .pipeline import (
    FRAME_BUDGET_MS,
    PipelineConfig,
    build_training_set,
    median_frame_ms,
    paired_frames_from_results,
    run_pipeline,
    write_timings_csv,
)
from .records import read_detections, read_truth, write_detections
from .simulator import DatasetPaths, generate_dataset, read_boxes_csv, read_meta

DEFAULT_BANDS = ((3.0, 20.0), (20.0, 40.0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beaconfuse",
        description="LiDAR + camera beacon detection and fusion pipeline",
    )
    parser.add_argument("--config", type=Path, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scenario into a dataset")
    p.add_argument("--scenario", type=Path, required=True)

    p = sub.add_parser("train-svm", help="train the beacon classifier on a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--regularization", type=float, default=1.0)
    p.add_argument("--model-out", type=Path, default=None, help="default <out-dir>/svm.json")

    p = sub.add_parser("train-mapper", help="train the box-to-polar mapper")
    p.add_argument("--dataset", type=Path, default=None, help="dataset with pairs.csv")
    p.add_argument("--pairs", type=Path, default=None, help="explicit pairs CSV")
    p.add_argument("--epochs", type=int, default=20000)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--model-out", type=Path, default=None, help="default <out-dir>/mapper.json")

    p = sub.add_parser("rank-features", help="rank features and emit the score curve")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--test-dataset", type=Path, default=None)
    p.add_argument("--regularization", type=float, default=1.0)

    p = sub.add_parser("run", help="run detection + fusion over a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--svm", type=Path, default=None)
    p.add_argument("--mapper", type=Path, default=None)
    p.add_argument("--strict", action="store_true",
                   help="fail when the median frame exceeds the 200 ms budget")

    p = sub.add_parser("evaluate", help="score detections against truth")
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--gate", type=float, default=None, help="truth-match gate in meters")

    p = sub.add_parser("grid-search", help="search (alpha, C) maximizing TPR - FPR")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--svm", type=Path, default=None)
    p.add_argument("--mapper", type=Path, default=None)
    p.add_argument("--alphas", type=str, default=None, help="comma-separated gains")
    p.add_argument("--cs", type=str, default=None, help="comma-separated thresholds")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        args.out_dir.mkdir(parents=True, exist_ok=True)
        handler = {
            "simulate": _cmd_simulate,
            "train-svm": _cmd_train_svm,
            "train-mapper": _cmd_train_mapper,
            "rank-features": _cmd_rank_features,
            "run": _cmd_run,
            "evaluate": _cmd_evaluate,
            "grid-search": _cmd_grid_search,
        }[args.command]
        return handler(args, cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _load_dataset_frames(dataset: Path, cfg: PipelineConfig):
    paths = DatasetPaths(root=dataset)
    meta = read_meta(paths.meta)
    boxes = read_boxes_csv(paths.boxes, meta["image_width"], meta["image_height"])
    for frame_id in paths.frame_ids():
        yield paths.load_frame(frame_id), boxes.get(frame_id, [])


def _models(args, cfg: PipelineConfig):
    # The config's sigmoid gain wins; the model file's copy is a record of
    # the training-time setting.
    svm_path = args.svm or (args.out_dir / cfg.svm_model)
    mapper_path = args.mapper or (args.out_dir / cfg.mapper_model)
    svm, _ = classifier.load_model(svm_path)
    mapper = camera_map.load_mapper(mapper_path)
    return svm, mapper


def _cmd_simulate(args, cfg: PipelineConfig) -> int:
    paths = generate_dataset(args.scenario, seed=args.seed, out_dir=args.out_dir)
    meta = read_meta(paths.meta)
    print(f"wrote {meta['frames']} frames to {paths.root}")
    return 0


def _cmd_train_svm(args, cfg: PipelineConfig) -> int:
    paths = DatasetPaths(root=args.dataset)
    truth = read_truth(paths.truth)
    clouds = (paths.load_frame(fid) for fid in paths.frame_ids())
    feats, labels = build_training_set(clouds, truth, cfg)
    if not feats:
        print("error: no clusters found in the dataset", file=sys.stderr)
        return 1
    model = classifier.train_svm(feats, labels, regularization=args.regularization)
    out = args.model_out or (args.out_dir / cfg.svm_model)
    classifier.save_model(out, model, cfg.sigmoid)
    tp, tn, fp, fn = classifier.svm_confusion(model, feats, labels)
    print(f"trained on {len(feats)} clusters: TP={tp} TN={tn} FP={fp} FN={fn}")
    print(f"model written to {out}")
    return 0


def _cmd_train_mapper(args, cfg: PipelineConfig) -> int:
    if args.pairs is not None:
        pairs = camera_map.read_pairs_csv(args.pairs)
    elif args.dataset is not None:
        paths = DatasetPaths(root=args.dataset)
        meta = read_meta(paths.meta)
        pairs = camera_map.read_pairs_csv(paths.pairs, meta["image_width"], meta["image_height"])
    else:
        print("error: provide --dataset or --pairs", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(pairs))
    n_holdout = int(len(pairs) * args.holdout)
    holdout_idx = set(order[:n_holdout].tolist())
    train_pairs = [pairs[i] for i in range(len(pairs)) if i not in holdout_idx]
    test_pairs = [pairs[i] for i in range(len(pairs)) if i in holdout_idx]
    network = camera_map.train_mapper(
        train_pairs, learning_rate=args.learning_rate, epochs=args.epochs, seed=args.seed
    )
    out = args.model_out or (args.out_dir / cfg.mapper_model)
    camera_map.save_mapper(out, network)
    eval_pairs = test_pairs or train_pairs
    predictions = [
        (float(row[0]), float(row[1]))
        for row in camera_map.mapper_forward(network, [box for box, _ in eval_pairs])
    ]
    truths = [target for _, target in eval_pairs]
    mse_d, mse_a, r2_d, r2_a = camera_map.mapping_metrics(predictions, truths)
    split = "holdout" if test_pairs else "train"
    print(f"{split} distance MSE={mse_d:.4f} r2={r2_d:.4f}; angle MSE={mse_a:.4f} r2={r2_a:.4f}")
    plots.save_mapper_scatter(predictions, truths, args.out_dir / "mapper_fit.png")
    print(f"model written to {out}")
    return 0


def _cmd_rank_features(args, cfg: PipelineConfig) -> int:
    paths = DatasetPaths(root=args.dataset)
    truth = read_truth(paths.truth)
    clouds = (paths.load_frame(fid) for fid in paths.frame_ids())
    feats, labels = build_training_set(clouds, truth, cfg)
    if not feats:
        print("error: no clusters found in the dataset", file=sys.stderr)
        return 1
    test_feats, test_labels = None, None
    if args.test_dataset is not None:
        test_paths = DatasetPaths(root=args.test_dataset)
        test_truth = read_truth(test_paths.truth)
        test_clouds = (test_paths.load_frame(fid) for fid in test_paths.frame_ids())
        test_feats, test_labels = build_training_set(test_clouds, test_truth, cfg)
    ranking = features.rank_features(feats, labels)
    normalizer = features.fit_normalizer(feats)
    model_doc = {
        "mu": list(normalizer.mu),
        "sigma": list(normalizer.sigma),
        "ranking": [idx for idx, _ in ranking],
    }
    (args.out_dir / "feature_model.json").write_text(json.dumps(model_doc, indent=2))
    curve = features.cumulative_score_curve(
        feats, labels, test_feats, test_labels, ranking=ranking,
        regularization=args.regularization,
    )
    with open(args.out_dir / "score_curve.csv", "w", newline="") as fh:
        fh.write("k,score_train,score_test\n")
        for k, train_score, test_score in curve:
            fh.write(f"{k},{train_score!r},{test_score!r}\n")
    plots.save_score_curve(curve, args.out_dir / "score_curve.png")
    top = ", ".join(f"f{idx + 1}={score:.0f}" for idx, score in ranking[:5])
    print(f"top features: {top}")
    print(f"wrote feature_model.json, score_curve.csv, score_curve.png to {args.out_dir}")
    return 0


def _cmd_run(args, cfg: PipelineConfig) -> int:
    svm, mapper = _models(args, cfg)
    results = list(run_pipeline(cfg, _load_dataset_frames(args.dataset, cfg), svm, mapper))
    write_detections(
        args.out_dir / "detections.csv",
        [(r.frame_id, list(r.fused_detections)) for r in results],
    )
    write_timings_csv(args.out_dir / "timings.csv", results)
    if cfg.front_guard_enabled:
        write_detections(
            args.out_dir / "front_guard.csv",
            [(r.frame_id, list(r.front_guard_detections)) for r in results],
        )
    median_ms = median_frame_ms(results)
    within = "within" if median_ms < FRAME_BUDGET_MS else "OVER"
    print(f"processed {len(results)} frames; median {median_ms:.1f} ms/frame "
          f"({within} the {FRAME_BUDGET_MS:.0f} ms budget)")
    if args.strict and median_ms >= FRAME_BUDGET_MS:
        print("error: frame budget exceeded in --strict mode", file=sys.stderr)
        return 1
    return 0


def _band_metrics(detections, truth, gate, band):
    lo, hi = band
    det_frames = []
    truth_frames = []
    for frame_id in sorted(truth.keys() | detections.keys()):
        det_frames.append([d for d in detections.get(frame_id, []) if lo <= d.distance < hi])
        truth_frames.append([t for t in truth.get(frame_id, []) if lo <= t.distance < hi])
    metrics = fusion.detection_metrics(det_frames, truth_frames, gate=gate)
    error = fusion.mean_position_error(det_frames, truth_frames, gate=gate)
    out = {"tp": metrics.tp, "fp": metrics.fp, "fn": metrics.fn, "tn": metrics.tn,
           "fpr": metrics.fpr, "mean_position_error_m": error}
    try:
        out["tpr"] = metrics.tpr
        out["fnr"] = metrics.fnr
    except ValueError:
        out["tpr"] = None
        out["fnr"] = None
    return out


def _cmd_evaluate(args, cfg: PipelineConfig) -> int:
    gate = args.gate if args.gate is not None else cfg.distance_gate
    detections = read_detections(args.detections)
    truth = read_truth(args.truth)
    bands = {"overall": (0.0, float("inf"))}
    bands.update({f"{int(lo)}-{int(hi)}m": (lo, hi) for lo, hi in DEFAULT_BANDS})
    report = {name: _band_metrics(detections, truth, gate, band) for name, band in bands.items()}
    (args.out_dir / "metrics.json").write_text(json.dumps(report, indent=2))
    plottable = {name: {k: v for k, v in vals.items() if v is not None}
                 for name, vals in report.items()}
    plots.save_metrics_bars(plottable, args.out_dir / "metrics.png")
    overall = report["overall"]
    tpr = overall["tpr"]
    tpr_text = "n/a" if tpr is None else f"{tpr:.3f}"
    fnr = overall["fnr"]
    fnr_text = "n/a" if fnr is None else f"{fnr:.3f}"
    print(f"TPR={tpr_text} FPR={overall['fpr']:.3f} FNR={fnr_text}")
    print(f"wrote metrics.json and metrics.png to {args.out_dir}")
    return 0


def _cmd_grid_search(args, cfg: PipelineConfig) -> int:
    svm, mapper = _models(args, cfg)
    paths = DatasetPaths(root=args.dataset)
    truth = read_truth(paths.truth)
    results = list(run_pipeline(cfg, _load_dataset_frames(args.dataset, cfg), svm, mapper))
    paired = paired_frames_from_results(results, truth)
    alphas = ([float(a) for a in args.alphas.split(",")] if args.alphas else fusion.GRID_ALPHAS)
    cs = ([float(c) for c in args.cs.split(",")] if args.cs else fusion.GRID_CS)
    result = fusion.grid_search(
        paired, alphas=alphas, cs=cs,
        angle_threshold=cfg.angle_threshold, gate=cfg.distance_gate,
    )
    fusion.write_heatmap_csv(args.out_dir / "heatmap.csv", result)
    fusion.write_heatmap_matrices(args.out_dir, result)
    plots.save_heatmaps(result, args.out_dir)
    chosen = {"alpha": result.best_alpha, "C": result.best_c}
    (args.out_dir / "chosen.json").write_text(json.dumps(chosen, indent=2))
    # A full pipeline config with the winning cell baked in, ready for `run`.
    tuned = json.loads(json.dumps(cfg.to_dict()))
    tuned["sigmoid"]["alpha"] = result.best_alpha
    tuned["fusion"]["confidence_threshold"] = result.best_c
    PipelineConfig.from_dict(tuned).save(args.out_dir / "chosen_config.json")
    print(f"best alpha={result.best_alpha!r} C={result.best_c!r}")
    print(f"wrote heatmap.csv, matrix CSVs, heat map figures and chosen_config.json to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

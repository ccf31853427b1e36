"""Batch command-line harness.

Subcommands: train, predict, explain, eval-classify, eval-segment,
preprocess. Machine-readable outputs (reports, predictions, images) go to
the requested files or stdout; progress and warnings go to stderr. Exit
codes: 0 success, 2 argument/usage problems (including missing or empty
input listings), 3 data errors (malformed files, bad values, shape
mismatches, unreadable inputs), 4 unexpected internal failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import backbone, cam, classify_metrics, imaging, segment_metrics
from .errors import ArgumentError, DataError

IMAGE_EXTS = (".png", ".ppm", ".pgm")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _read_manifest(path: str) -> list[tuple[str, int]]:
    """CSV with header image_path,label; paths resolve against the manifest's
    directory. Missing or empty manifests are usage errors, malformed rows
    are data errors."""
    if not os.path.isfile(path):
        raise ArgumentError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    rows: list[tuple[str, int]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ArgumentError(f"manifest {path} is empty") from None
        if [h.strip() for h in header] != ["image_path", "label"]:
            raise DataError(f"{path}: manifest header must be "
                            f"image_path,label, got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                label = int(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: label {row[1]!r} is not an "
                                f"integer") from exc
            img_path = row[0] if os.path.isabs(row[0]) else os.path.join(base, row[0])
            rows.append((img_path, label))
    if not rows:
        raise ArgumentError(f"manifest {path} has no data rows")
    return rows


def _load_dataset(rows: list[tuple[str, int]]) -> list[tuple[np.ndarray, int]]:
    return [(imaging.load_image(p), lbl) for p, lbl in rows]


def cmd_train(args: argparse.Namespace) -> int:
    rows = _read_manifest(args.manifest)
    dataset = _load_dataset(rows)
    config = backbone.TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                                  batch_size=args.batch_size, seed=args.seed)
    if config.epochs < 1 or config.batch_size < 1 or config.learning_rate <= 0:
        raise ArgumentError("epochs and batch-size must be >= 1, lr > 0")
    params, history = backbone.train(dataset, config, num_classes=args.classes)
    backbone.save_params(params, args.out)
    last = history[-1]
    _log(f"trained {config.epochs} epochs on {len(dataset)} images: "
         f"loss {last['loss']:.4f}, accuracy {last['accuracy']:.4f}")
    _log(f"weights written to {args.out}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    params = backbone.load_params(args.weights)
    rows = _read_manifest(args.manifest)
    records = []
    for path, label in rows:
        if not 0 <= label < params.num_classes:
            raise DataError(f"{path}: label {label} out of range for "
                            f"{params.num_classes} classes")
        probs = backbone.forward(params, imaging.load_image(path)).probs
        records.append(classify_metrics.PredictionRecord(
            item_id=path, true_label=label, probs=probs))
    classify_metrics.write_predictions(args.out, records)
    _log(f"wrote {len(records)} prediction rows to {args.out}")
    return 0


def _adapt_image(img: np.ndarray, params: backbone.ModelParams) -> np.ndarray:
    """Fit an image to the model contract: bilinear resize to the model's
    spatial size, replicate gray to RGB or collapse RGB to luma as needed."""
    h, w, cin = params.input_shape
    if img.shape[0] != h or img.shape[1] != w:
        img = imaging.resize_image(img, h, w, "bilinear")
    if img.shape[2] == 1 and cin == 3:
        img = np.repeat(img, 3, axis=2)
    elif img.shape[2] == 3 and cin == 1:
        img = imaging.to_grayscale(img)
    elif img.shape[2] != cin:
        raise DataError(f"image has {img.shape[2]} channels, model expects {cin}")
    return img


def cmd_explain(args: argparse.Namespace) -> int:
    if not (args.out_heatmap or args.out_overlay or args.out_json):
        raise ArgumentError("nothing to do: pass --out-heatmap, --out-overlay "
                            "or --out-json")
    params = backbone.load_params(args.weights)
    image = _adapt_image(imaging.load_image(args.image), params)
    if args.class_index == "predicted":
        class_index = int(np.argmax(backbone.forward(params, image).probs))
    else:
        try:
            class_index = int(args.class_index)
        except ValueError:
            raise ArgumentError(f"--class must be an integer or 'predicted', "
                                f"got {args.class_index!r}") from None
    heatmap, weights = cam.run_method(args.method, params, image, class_index,
                                      layer=args.layer,
                                      n_channels=args.top_channels)
    if args.out_heatmap:
        imaging.save_image(heatmap.rendered, args.out_heatmap)
        _log(f"heatmap written to {args.out_heatmap}")
    if args.out_overlay:
        overlay = imaging.overlay_heatmap(image, heatmap.rendered, args.alpha)
        imaging.save_image(overlay, args.out_overlay)
        _log(f"overlay written to {args.out_overlay}")
    if args.out_json:
        _emit_json(cam.attribution_record(heatmap, weights, args.layer),
                   args.out_json)
        _log(f"attribution record written to {args.out_json}")
    return 0


def cmd_eval_classify(args: argparse.Namespace) -> int:
    if not os.path.isfile(args.predictions):
        raise ArgumentError(f"predictions file not found: {args.predictions}")
    records, c = classify_metrics.read_predictions(args.predictions,
                                                   num_classes=args.classes)
    report = classify_metrics.classification_report(records, c)
    agg = {"macro": report.macro, "micro": report.micro,
           "weighted": report.weighted}[args.average]
    _log(f"n={report.n} accuracy={report.accuracy:.4f} "
         f"{args.average}: precision={agg['precision']:.4f} "
         f"recall={agg['recall']:.4f} f1={agg['f1']:.4f} "
         f"jaccard={agg['jaccard']:.4f}")
    _emit_json(report.to_json_dict(), args.out)
    return 0


def _load_mask(path: str, threshold: float) -> np.ndarray:
    img = imaging.load_image(path)
    if img.shape[2] != 1:
        raise DataError(f"{path}: masks must be single-channel, got "
                        f"{img.shape[2]} channels")
    # thresholds above 1 are on the 8-bit scale; loaded pixels are unit-scale
    t = threshold / 255.0 if threshold > 1.0 else threshold
    return segment_metrics.binarize(img[:, :, 0], t)


def cmd_eval_segment(args: argparse.Namespace) -> int:
    for d in (args.pred_dir, args.gt_dir):
        if not os.path.isdir(d):
            raise ArgumentError(f"directory not found: {d}")
    pred_files = {f for f in os.listdir(args.pred_dir)
                  if f.lower().endswith(IMAGE_EXTS)}
    gt_files = {f for f in os.listdir(args.gt_dir)
                if f.lower().endswith(IMAGE_EXTS)}
    if pred_files != gt_files:
        only_p = sorted(pred_files - gt_files)
        only_g = sorted(gt_files - pred_files)
        raise DataError(f"prediction/ground-truth files do not pair up: "
                        f"only in {args.pred_dir}: {only_p}; "
                        f"only in {args.gt_dir}: {only_g}")
    names = sorted(pred_files)
    if not names:
        raise ArgumentError("no mask files to evaluate")
    config = segment_metrics.SegEvalConfig(tolerance=args.tolerance,
                                           hausdorff_mode=args.hausdorff,
                                           threshold=args.threshold)
    pairs = [(_load_mask(os.path.join(args.pred_dir, n), args.threshold),
              _load_mask(os.path.join(args.gt_dir, n), args.threshold), n)
             for n in names]
    report = segment_metrics.segmentation_report(pairs, config)
    if args.per_pair_out:
        with open(args.per_pair_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair_id", "iou", "dice", "pixel_accuracy",
                             "modified_hausdorff", "surface_dice"])
            for row in report.rows:
                writer.writerow([row["pair_id"], repr(row["iou"]),
                                 repr(row["dice"]), repr(row["pixel_accuracy"]),
                                 repr(row["modified_hausdorff"]),
                                 repr(row["surface_dice"])])
        _log(f"per-pair table written to {args.per_pair_out}")
    _log(f"evaluated {report.n} mask pairs "
         f"(hausdorff defined on {report.hausdorff_n})")
    _emit_json(report.to_json_dict(), args.out)
    return 0


def _parse_resize(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ArgumentError(f"--resize must be HxW, got {text!r}")
    try:
        h, w = int(parts[0]), int(parts[1])
    except ValueError:
        raise ArgumentError(f"--resize must be HxW integers, got {text!r}") from None
    if h < 1 or w < 1:
        raise ArgumentError(f"--resize dimensions must be positive, got {text!r}")
    return h, w


def cmd_preprocess(args: argparse.Namespace) -> int:
    if not os.path.isdir(args.in_dir):
        raise ArgumentError(f"directory not found: {args.in_dir}")
    specs = [imaging.AugmentSpec.parse(s) for s in (args.augment or ["none"])]
    target = _parse_resize(args.resize) if args.resize else None
    names = sorted(f for f in os.listdir(args.in_dir)
                   if f.lower().endswith(IMAGE_EXTS))
    os.makedirs(args.out_dir, exist_ok=True)
    written = 0
    failed = 0
    for name in names:
        src = os.path.join(args.in_dir, name)
        try:
            img = imaging.load_image(src)
            if target:
                img = imaging.resize_image(img, target[0], target[1], args.mode)
            stem, ext = os.path.splitext(name)
            for spec in specs:
                out_path = os.path.join(args.out_dir, stem + spec.suffix() + ext)
                imaging.save_image(imaging.apply_augment(img, spec), out_path)
                written += 1
        except (DataError, OSError) as exc:
            failed += 1
            _log(f"warning: skipping {src}: {exc}")
    _log(f"wrote {written} images to {args.out_dir} "
         f"({failed} inputs skipped)")
    if written == 0:
        raise DataError(f"no images could be processed from {args.in_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fundus-xai",
        description="Train, explain, and evaluate a small fundus-image "
                    "classifier; score segmentation masks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the micro CNN on a manifest")
    p.add_argument("--manifest", required=True,
                   help="CSV of image_path,label rows")
    p.add_argument("--classes", type=int, default=None,
                   help="class count (default: max label + 1)")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="weights JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write per-image class probabilities")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="render a class activation map")
    p.add_argument("--image", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--method", default="grad-cam", choices=cam.METHODS)
    p.add_argument("--layer", default="conv2_relu", choices=backbone.LAYERS)
    p.add_argument("--class", dest="class_index", default="predicted",
                   help="target class index, or 'predicted'")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="overlay blend weight in [0, 1]")
    p.add_argument("--top-channels", type=int, default=10,
                   help="channel budget for faster-score-cam")
    p.add_argument("--out-heatmap", default=None)
    p.add_argument("--out-overlay", default=None)
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval-classify", help="score a predictions table")
    p.add_argument("--predictions", required=True)
    p.add_argument("--classes", type=int, default=None,
                   help="expected class count (default: from header)")
    p.add_argument("--average", default="weighted",
                   choices=classify_metrics.SCHEMES)
    p.add_argument("--out", default=None, help="report JSON (default stdout)")
    p.set_defaults(func=cmd_eval_classify)

    p = sub.add_parser("eval-segment",
                       help="score prediction masks against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--threshold", type=float, default=128.0,
                   help="foreground threshold; >1 means 8-bit scale")
    p.add_argument("--tolerance", type=float, default=0.0,
                   help="surface dice tolerance in pixels")
    p.add_argument("--hausdorff", default="symmetric",
                   choices=segment_metrics.HAUSDORFF_MODES)
    p.add_argument("--out", default=None, help="report JSON (default stdout)")
    p.add_argument("--per-pair-out", default=None,
                   help="optional per-pair CSV table")
    p.set_defaults(func=cmd_eval_segment)

    p = sub.add_parser("preprocess",
                       help="resize and augment a directory of images")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resize", default=None, help="target HxW")
    p.add_argument("--mode", default="bilinear",
                   choices=("bilinear", "nearest"))
    p.add_argument("--augment", action="append", default=None,
                   help="spec like rot90_hflip_vflip; repeatable")
    p.set_defaults(func=cmd_preprocess)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits itself; keep main returning int
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ArgumentError as exc:
        _log(f"error: {exc}")
        return 2
    except (DataError, OSError) as exc:
        _log(f"error: {exc}")
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        _log(f"internal error: {type(exc).__name__}: {exc}")
        return 4


if __name__ == "__main__":
    sys.exit(main())

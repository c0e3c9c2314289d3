"""Command-line front-end.

Exit codes: 0 success, 1 verification or metric failure, 2 usage or IO error.
Per-image failures in batch commands are reported as warnings and skipped.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import dataset_builder as db
from . import eval_metrics as em
from . import image_quality as iq
from .errors import WildfaceError
from .pose_geometry import DEFAULT_CONF_THRESHOLD, Orientation, first_per_image, parse_pose_file

log = logging.getLogger("wildface")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def worker_count() -> int:
    """Worker pool size, capped by ``WILDFACE_WORKERS`` when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get("WILDFACE_WORKERS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise UsageError(f"WILDFACE_WORKERS must be an integer, got {cap!r}") from None
    return n


def ordered_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot write {out}: {exc.strerror or exc}") from None


def _load_poses(path):
    try:
        return first_per_image(parse_pose_file(_read_text(path)))
    except WildfaceError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _check_threshold(value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise UsageError(f"--conf-threshold must lie in [0, 1], got {value}")
    return value


def _body_height(value: str):
    if value in ("image", "keypoints"):
        return value
    try:
        return float(value)
    except ValueError:
        raise UsageError(f"--body-height must be image, keypoints or a number, got {value!r}") from None


def cmd_orient(args) -> int:
    from .dataset_builder import label_pose

    threshold = _check_threshold(args.conf_threshold)
    poses = _load_poses(args.poses)
    records = [label_pose(s, None, threshold) for s in poses]
    counts = {o.value: 0 for o in Orientation}
    undetectable = 0
    rows = []
    for r in records:
        if r.orientation is None:
            undetectable += 1
        else:
            counts[r.orientation.value] += 1
        rows.append({"image_id": r.image_id, "orientation": r.orientation.value if r.orientation else ""})
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["image_id", "orientation"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    _emit(text, args.out)
    summary = ", ".join(f"{k}: {v}" for k, v in counts.items())
    print(f"{len(rows)} poses; {summary}; undetectable: {undetectable}", file=sys.stderr)
    return EXIT_OK


def find_image(images_dir: Path, image_id: str) -> Path | None:
    candidate = images_dir / image_id
    if candidate.is_file():
        return candidate
    for suffix in iq.IMAGE_SUFFIXES:
        for s in (suffix, suffix.upper()):
            p = images_dir / (image_id + s)
            if p.is_file():
                return p
    return None


def crop_filename(image_id: str) -> str:
    stem = image_id
    if Path(image_id).suffix.lower() in iq.IMAGE_SUFFIXES:
        stem = image_id[: -len(Path(image_id).suffix)]
    return stem.replace("/", "_").replace("\\", "_") + "_head.png"


def cmd_heads(args) -> int:
    threshold = _check_threshold(args.conf_threshold)
    body_height = _body_height(args.body_height)
    poses = _load_poses(args.poses)
    images_dir = Path(args.images)
    if not images_dir.is_dir():
        raise UsageError(f"image directory {images_dir} does not exist")
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out_dir}: {exc.strerror or exc}") from None

    def work(skel):
        pre = db.label_pose(skel, None, threshold, body_height)
        if pre.orientation is not Orientation.FRONTAL:
            return pre, None, None
        path = find_image(images_dir, skel.image_id)
        if path is None:
            return pre, None, f"{skel.image_id}: image not found"
        try:
            img = iq.load_image(path)
        except Exception as exc:  # any decoder failure is a per-image problem
            return pre, None, f"{skel.image_id}: cannot decode {path.name} ({exc})"
        h, w = img.shape[:2]
        rec = db.label_pose(skel, (w, h), threshold, body_height)
        if rec.head_box is None:
            return rec, None, f"{skel.image_id}: head not detected"
        return rec, db.crop_box(img, rec.head_box, skel.image_id), None

    results = ordered_map(work, poses, worker_count())
    results.sort(key=lambda t: t[0].image_id)
    n_crops = 0
    for rec, crop, warning in results:
        if warning:
            log.warning(warning)
        if crop is not None:
            iq.save_png(out_dir / crop_filename(rec.image_id), crop)
            n_crops += 1
    _emit(db.write_metadata([r for r, _, _ in results]), out_dir / "metadata.csv")
    skipped = sum(1 for r, c, _ in results if r.orientation is Orientation.FRONTAL and c is None)
    print(f"{len(results)} poses; {n_crops} head crops; {skipped} frontal images skipped",
          file=sys.stderr)
    return EXIT_OK


def _parse_named_dir(spec: str) -> tuple[str, Path]:
    if "=" in spec:
        name, path = spec.split("=", 1)
    else:
        name, path = Path(spec.rstrip("/")).name, spec
    return name, Path(path)


def cmd_quality(args) -> int:
    groups = {}
    jobs = []
    for spec in args.dirs:
        name, path = _parse_named_dir(spec)
        if not path.is_dir():
            raise UsageError(f"image directory {path} does not exist")
        if name in groups:
            raise UsageError(f"dataset name {name!r} given twice")
        groups[name] = []
        jobs.extend((name, p) for p in iq.list_images(path))

    def work(job):
        name, path = job
        try:
            return name, iq.quality_record(path.name, iq.load_image(path)), None
        except Exception as exc:  # corrupt or tiny images are skipped
            return name, None, f"{path}: {exc}"

    for name, rec, warning in ordered_map(work, jobs, worker_count()):
        if warning:
            log.warning(warning)
        else:
            groups[name].append(rec)
    try:
        stats = iq.dataset_stats(groups)
    except WildfaceError as exc:
        log.error(str(exc))
        return EXIT_FAIL
    _emit(iq.stats_to_json(stats) if args.format == "json" else iq.stats_to_csv(stats), args.out)
    return EXIT_OK


def _split_spec(spec: str, what: str) -> list[str]:
    parts = spec.split(":")
    if len(parts) != 5:
        raise UsageError(f"{what} must be NAME:TRAIN:TEST:FRONTAL_TRAIN:FRONTAL_TEST, got {spec!r}")
    return parts


def cmd_ratios(args) -> int:
    reports = []
    try:
        for spec in args.counts or []:
            name, *nums = _split_spec(spec, "--counts")
            try:
                counts = [int(n) for n in nums]
            except ValueError:
                raise UsageError(f"--counts values must be integers, got {spec!r}") from None
            reports.append(db.ratio_report_from_counts(name, *counts))
        for spec in args.manifests or []:
            name, *paths = _split_spec(spec, "--manifests")
            splits = ("train", "test", "train", "test")
            try:
                m = [db.read_manifest_csv(_read_text(p), name, s) for p, s in zip(paths, splits)]
            except WildfaceError as exc:
                raise UsageError(str(exc)) from None
            reports.append(db.ratio_report((m[0], m[1]), (m[2], m[3]), name))
    except (db.UndefinedRatioError, ValueError) as exc:
        log.error(str(exc))
        return EXIT_FAIL
    if not reports:
        raise UsageError("give at least one --counts or --manifests dataset")
    _emit(db.ratios_to_json(reports) if args.format == "json" else db.ratios_to_csv(reports), args.out)
    return EXIT_OK


def cmd_ma(args) -> int:
    rows = []
    status = EXIT_OK
    if args.predictions:
        try:
            _, preds, labels = em.read_predictions_csv(_read_text(args.predictions))
            ma = em.mean_accuracy(em.confusion(preds, labels))
        except em.MetricInputError as exc:
            raise UsageError(f"{args.predictions}: {exc}") from None
        except em.UndefinedClassError as exc:
            log.error(str(exc))
            return EXIT_FAIL
        rows.append({"metric": "mA", "base": "", "new": "", "value": f"{ma:.3f}"})
        if args.baseline is not None:
            red = em.error_reduction(args.baseline, 100.0 * ma)
            rows.append({"metric": "error_reduction_pct", "base": f"{args.baseline:.2f}",
                         "new": f"{100.0 * ma:.2f}", "value": em.format_percent(red)})
    for base, new in args.pair or []:
        try:
            red = em.error_reduction(base, new)
        except (ValueError, ZeroDivisionError) as exc:
            log.error(f"pair {base} -> {new}: {exc}")
            status = EXIT_FAIL
            continue
        rows.append({"metric": "error_reduction_pct", "base": f"{base:.2f}", "new": f"{new:.2f}",
                     "value": em.format_percent(red)})
    if not rows and status == EXIT_OK:
        raise UsageError("give --predictions and/or --pair")
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["metric", "base", "new", "value"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    _emit(text, args.out)
    return status


def cmd_famcheck(args) -> int:
    from .errors import ConfigError
    from .fam import parse_dims, run_selfcheck

    try:
        dims = parse_dims(args.dims)
        results = run_selfcheck(dims, seed=args.seed, reduction=args.reduction, h=args.h,
                                inject_corruption=args.inject_corruption)
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    ok = all(r.passed for r in results)
    if args.format == "json":
        text = json.dumps({"passed": ok, "dims": list(dims), "seed": args.seed,
                           "checks": [r.to_dict() for r in results]}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["check", "passed", "value"])
        for r in results:
            writer.writerow([r.name, "pass" if r.passed else "FAIL", f"{r.value:.3e}"])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wildface", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--out", help="output file (stdout when omitted)")
        if fmt:
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("orient", help="label pose orientations")
    p.add_argument("--poses", required=True)
    p.add_argument("--conf-threshold", type=float, default=DEFAULT_CONF_THRESHOLD)
    common(p)
    p.set_defaults(func=cmd_orient)

    p = sub.add_parser("heads", help="crop head regions of frontal images")
    p.add_argument("--poses", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True, help="output directory for crops and metadata.csv")
    p.add_argument("--conf-threshold", type=float, default=DEFAULT_CONF_THRESHOLD)
    p.add_argument("--body-height", default="image", help="image, keypoints or pixels")
    p.set_defaults(func=cmd_heads)

    p = sub.add_parser("quality", help="resolution/luminosity/blurriness statistics")
    p.add_argument("dirs", nargs="+", metavar="[NAME=]DIR")
    common(p)
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("ratios", help="split and frontal ratio table")
    p.add_argument("--counts", action="append", metavar="NAME:TRAIN:TEST:FTRAIN:FTEST")
    p.add_argument("--manifests", action="append", metavar="NAME:TRAIN.csv:TEST.csv:FTRAIN.csv:FTEST.csv")
    common(p)
    p.set_defaults(func=cmd_ratios)

    p = sub.add_parser("ma", help="gender mA and error reduction")
    p.add_argument("--predictions", help="CSV with image_id,prediction,label")
    p.add_argument("--baseline", type=float, help="baseline mA in percent")
    p.add_argument("--pair", nargs=2, type=float, action="append", metavar=("BASE", "NEW"))
    common(p)
    p.set_defaults(func=cmd_ma)

    p = sub.add_parser("famcheck", help="verify gradients and invariants of the fusion module")
    p.add_argument("--dims", default="8x4x3", help="CxHxW")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--reduction", type=int)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--inject-corruption", action="store_true")
    common(p)
    p.set_defaults(func=cmd_famcheck)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s", force=True)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        log.error(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

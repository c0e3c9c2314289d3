"""Frontal subsets, head crops, split-ratio tables and the metadata CSV.

Metadata CSV columns (normative)::

    image_id,orientation,cx,cy,x0,y0,x1,y1

``orientation`` is ``Frontal``, ``Sideways``, ``Backside`` or empty when the
pose could not be labelled. Head centre and box cells are empty when no head
was detected; the centre is written with two decimals, the box as integers.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AmbiguousPoseError,
    DegenerateROIError,
    HeadUndetectableError,
    ManifestError,
    MetadataParseError,
    MissingAssetError,
    UndefinedRatioError,
    UndetectablePoseError,
)
from .pose_geometry import (
    DEFAULT_CONF_THRESHOLD,
    Orientation,
    PoseSkeleton,
    classify_orientation,
    head_center,
    head_roi,
)

METADATA_COLUMNS = ("image_id", "orientation", "cx", "cy", "x0", "y0", "x1", "y1")
SPLITS = ("train", "test")


@dataclass(frozen=True)
class SplitManifest:
    """Gender-labelled image list of one dataset split (0 male, 1 female)."""

    name: str
    split: str
    entries: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {self.split!r}")
        seen = set()
        for image_id, label in self.entries:
            if image_id in seen:
                raise ManifestError(f"{self.name}/{self.split}: duplicate image id {image_id!r}")
            if label not in (0, 1):
                raise ManifestError(f"{self.name}/{self.split}: label of {image_id!r} must be 0 or 1")
            seen.add(image_id)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]


def read_manifest_csv(text: str, name: str, split: str) -> SplitManifest:
    """Parse a two-column ``image_id,gender`` CSV; a header row is optional."""
    entries = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ManifestError(f"line {lineno}: expected 2 columns, got {len(row)}")
        image_id, label = row[0].strip(), row[1].strip()
        if lineno == 1 and label not in ("0", "1"):
            continue
        if label not in ("0", "1"):
            raise ManifestError(f"line {lineno}: gender must be 0 or 1, got {label!r}")
        entries.append((image_id, int(label)))
    return SplitManifest(name, split, tuple(entries))


def write_manifest_csv(manifest: SplitManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "gender"])
    writer.writerows(manifest.entries)
    return buf.getvalue()


@dataclass(frozen=True)
class MetadataRecord:
    image_id: str
    orientation: Orientation | None = None
    head_box: tuple[int, int, int, int] | None = None
    head_center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.head_box is not None and self.orientation is not Orientation.FRONTAL:
            raise ValueError(f"{self.image_id!r}: head box on a non-frontal record")
        if self.head_box is not None and self.head_center is None:
            raise ValueError(f"{self.image_id!r}: head box without a head centre")


@dataclass
class FrontalSubsetResult:
    manifest: SplitManifest
    metadata: list[MetadataRecord]


def _round_center(c: tuple[float, float]) -> tuple[float, float]:
    return (round(c[0], 2), round(c[1], 2))


def label_pose(
    skel: PoseSkeleton,
    image_size: tuple[int, int] | None = None,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    body_height: str | float = "image",
) -> MetadataRecord:
    """Orientation and, for frontal poses, head centre and box of one skeleton.

    The box needs ``image_size`` as ``(width, height)``; without it only the
    centre is recorded.
    """
    try:
        orient = classify_orientation(skel, conf_threshold)
    except UndetectablePoseError:
        return MetadataRecord(skel.image_id)
    if orient is not Orientation.FRONTAL:
        return MetadataRecord(skel.image_id, orient)
    box = center = None
    try:
        if image_size is not None:
            roi = head_roi(skel, image_size[0], image_size[1], body_height, conf_threshold)
            box, center = roi.box, (roi.center_x, roi.center_y)
        else:
            center = head_center(skel, conf_threshold)
    except (HeadUndetectableError, DegenerateROIError, UndetectablePoseError):
        box = center = None
    return MetadataRecord(
        skel.image_id, orient, box, None if center is None else _round_center(center)
    )


def build_frontal_subset(
    manifest: SplitManifest,
    poses: Sequence[PoseSkeleton],
    image_sizes: Mapping[str, tuple[int, int]] | None = None,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    body_height: str | float = "image",
) -> FrontalSubsetResult:
    """Keep the Frontal entries of ``manifest`` and label every image.

    ``image_sizes`` maps image id to ``(width, height)``; head boxes are only
    computed for frontal images whose size is known. Frontal images without a
    detectable head stay in the subset with no box. Metadata is sorted by
    image id; centres are rounded to the two decimals written to CSV.
    """
    by_id: dict[str, PoseSkeleton] = {}
    for skel in poses:
        if skel.image_id in by_id:
            raise AmbiguousPoseError(f"more than one pose record for {skel.image_id!r}")
        by_id[skel.image_id] = skel

    kept = []
    metadata = []
    for image_id, label in manifest.entries:
        skel = by_id.get(image_id)
        if skel is None:
            metadata.append(MetadataRecord(image_id))
            continue
        size = None if image_sizes is None else image_sizes.get(image_id)
        rec = label_pose(skel, size, conf_threshold, body_height)
        if rec.orientation is Orientation.FRONTAL:
            kept.append((image_id, label))
        metadata.append(rec)
    metadata.sort(key=lambda r: r.image_id)
    return FrontalSubsetResult(SplitManifest(manifest.name, manifest.split, tuple(kept)), metadata)


@dataclass
class CropSummary:
    crops: dict[str, np.ndarray] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)


def crop_box(img: np.ndarray, box: tuple[int, int, int, int], image_id: str) -> np.ndarray:
    x0, y0, x1, y1 = box
    h, w = img.shape[:2]
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise DegenerateROIError(f"{image_id!r}: box {box} outside the {w}x{h} image")
    return img[y0:y1, x0:x1].copy()


def extract_head_crops(
    images: Mapping[str, np.ndarray] | Callable[[str], np.ndarray | None],
    metadata: Iterable[MetadataRecord],
    workers: int = 1,
) -> CropSummary:
    """Copy the head box of every frontal record out of its image.

    ``images`` is a mapping or a loader returning ``None`` for unknown ids.
    Records without a box are skipped and listed in the summary. Output order
    follows ``metadata`` regardless of ``workers``.
    """
    records = list(metadata)
    with_box = [r for r in records if r.head_box is not None]
    skipped = [r.image_id for r in records if r.head_box is None]

    def fetch(image_id):
        if callable(images):
            return images(image_id)
        return images.get(image_id)

    sources = [fetch(r.image_id) for r in with_box]
    missing = [r.image_id for r, src in zip(with_box, sources) if src is None]
    if missing:
        raise MissingAssetError(missing)

    def work(pair):
        rec, src = pair
        return crop_box(np.asarray(src), rec.head_box, rec.image_id)

    pairs = list(zip(with_box, sources))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            crops = list(pool.map(work, pairs))
    else:
        crops = [work(p) for p in pairs]
    return CropSummary({r.image_id: c for r, c in zip(with_box, crops)}, skipped)


@dataclass(frozen=True)
class RatioReport:
    """Split sizes and ratios of one dataset and its frontal version.

    Ratios are exact fractions; :meth:`formatted` rounds them half-even to
    three decimals.
    """

    dataset: str
    train: int
    test: int
    frontal_train: int
    frontal_test: int
    test_all: Fraction
    frontal_test_all: Fraction
    frontal_train_ratio: Fraction
    frontal_test_ratio: Fraction

    RATIO_FIELDS = ("test_all", "frontal_test_all", "frontal_train_ratio", "frontal_test_ratio")

    def formatted(self) -> dict[str, str]:
        return {f: format_ratio(getattr(self, f)) for f in self.RATIO_FIELDS}

    def as_row(self) -> dict:
        row = {
            "dataset": self.dataset,
            "train": self.train,
            "test": self.test,
            "frontal_train": self.frontal_train,
            "frontal_test": self.frontal_test,
        }
        row.update(self.formatted())
        return row


def format_ratio(value: Fraction, places: int = 3) -> str:
    return f"{float(round(Fraction(value), places)):.{places}f}"


def _ratio(num: int, den: int, what: str) -> Fraction:
    if den == 0:
        raise UndefinedRatioError(f"{what}: zero denominator")
    return Fraction(num, den)


def ratio_report_from_counts(
    dataset: str, train: int, test: int, frontal_train: int, frontal_test: int
) -> RatioReport:
    counts = (train, test, frontal_train, frontal_test)
    if any(c < 0 for c in counts):
        raise ValueError(f"{dataset}: counts must be non-negative")
    if frontal_train > train or frontal_test > test:
        raise ValueError(f"{dataset}: frontal counts exceed original counts")
    return RatioReport(
        dataset, train, test, frontal_train, frontal_test,
        test_all=_ratio(test, train + test, f"{dataset} test/all"),
        frontal_test_all=_ratio(frontal_test, frontal_train + frontal_test, f"{dataset} frontal test/all"),
        frontal_train_ratio=_ratio(frontal_train, train, f"{dataset} frontal/PAR train"),
        frontal_test_ratio=_ratio(frontal_test, test, f"{dataset} frontal/PAR test"),
    )


def ratio_report(
    original: tuple[SplitManifest, SplitManifest],
    frontal: tuple[SplitManifest, SplitManifest],
    dataset: str | None = None,
) -> RatioReport:
    """Table-style ratios from ``(train, test)`` manifests of a dataset and its frontal subset."""
    train, test = original
    ftrain, ftest = frontal
    return ratio_report_from_counts(
        dataset or train.name, len(train), len(test), len(ftrain), len(ftest)
    )


RATIO_COLUMNS = (
    "dataset", "train", "test", "frontal_train", "frontal_test",
    "test_all", "frontal_test_all", "frontal_train_ratio", "frontal_test_ratio",
)


def ratios_to_csv(reports: Iterable[RatioReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RATIO_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.as_row())
    return buf.getvalue()


def ratios_to_json(reports: Iterable[RatioReport]) -> str:
    return json.dumps([r.as_row() for r in reports], indent=2) + "\n"


def write_metadata(records: Iterable[MetadataRecord]) -> str:
    """Serialise metadata records to CSV text in the given order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METADATA_COLUMNS)
    for r in records:
        orient = "" if r.orientation is None else r.orientation.value
        cx = cy = ""
        if r.head_center is not None:
            cx, cy = f"{r.head_center[0]:.2f}", f"{r.head_center[1]:.2f}"
        box = ("",) * 4 if r.head_box is None else tuple(str(int(v)) for v in r.head_box)
        writer.writerow((r.image_id, orient, cx, cy) + box)
    return buf.getvalue()


def read_metadata(text: str) -> list[MetadataRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MetadataParseError(1, "empty metadata document") from None
    if tuple(header) != METADATA_COLUMNS:
        raise MetadataParseError(1, f"unexpected header {header}")
    out = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(METADATA_COLUMNS):
            raise MetadataParseError(line, f"expected {len(METADATA_COLUMNS)} fields, got {len(row)}")
        image_id, orient, cx, cy, *box = row
        try:
            orientation = Orientation(orient) if orient else None
            center = None
            if cx or cy:
                center = (float(cx), float(cy))
            head_box = None
            if any(box):
                head_box = tuple(int(v) for v in box)
            out.append(MetadataRecord(image_id, orientation, head_box, center))
        except ValueError as exc:
            raise MetadataParseError(line, str(exc)) from None
    return out

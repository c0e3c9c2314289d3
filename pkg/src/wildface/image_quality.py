"""Per-image resolution, luminosity and blurriness, plus pooled dataset statistics.

Images are ``(height, width, 3)`` arrays of 8-bit RGB values.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyStatsError, ImageTooSmallError

FEATURES = ("resolution", "luminosity", "blurriness")

# BT.601 weights in thousandths; integer weighting keeps gray levels exact
# for achromatic pixels.
_WEIGHTS = np.array([299, 587, 114], dtype=np.int64)

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


def as_rgb(img) -> np.ndarray:
    """Validate and return an ``(h, w, 3)`` uint8 view of ``img``."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must contain at least one pixel")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255) or np.any(arr != np.round(arr)):
            raise ValueError("channel values must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def load_image(path) -> np.ndarray:
    """Decode a PNG/JPEG file into an 8-bit RGB array."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(path, img) -> None:
    from PIL import Image

    Image.fromarray(as_rgb(img)).save(path, format="PNG")


def resolution(img) -> int:
    h, w, _ = as_rgb(img).shape
    return int(w * h)


def perceived_brightness(rgb: np.ndarray) -> np.ndarray:
    """sqrt(0.299 R^2 + 0.587 G^2 + 0.114 B^2) per pixel, scaled to [0, 1]."""
    sq = rgb.astype(np.int64) ** 2
    return np.sqrt((sq @ _WEIGHTS) / 1000.0) / 255.0


def linear_brightness(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma per pixel, scaled to [0, 1]."""
    return (rgb.astype(np.int64) @ _WEIGHTS) / (1000.0 * 255.0)


def luminosity(img, brightness: Callable[[np.ndarray], np.ndarray] = perceived_brightness) -> float:
    """Mean perceived brightness over all pixels."""
    return float(np.mean(brightness(as_rgb(img))))


def grayscale(img) -> np.ndarray:
    return (as_rgb(img).astype(np.int64) @ _WEIGHTS) / 1000.0


def laplacian_response(gray: np.ndarray) -> np.ndarray:
    """4-neighbour Laplacian, valid region only (no padding)."""
    g = np.asarray(gray, dtype=np.float64)
    return (
        g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * g[1:-1, 1:-1]
    )


def blurriness(img) -> float:
    """Population variance of the Laplacian response of the grayscale image."""
    rgb = as_rgb(img)
    h, w, _ = rgb.shape
    if h < 3 or w < 3:
        raise ImageTooSmallError(f"blurriness needs at least 3x3 pixels, got {w}x{h}")
    return float(np.var(laplacian_response(grayscale(rgb))))


@dataclass(frozen=True)
class QualityRecord:
    image_id: str
    resolution: int
    luminosity: float
    blurriness: float

    def feature(self, name: str) -> float:
        return float(getattr(self, name))


def quality_record(image_id: str, img, brightness=perceived_brightness) -> QualityRecord:
    rgb = as_rgb(img)
    return QualityRecord(image_id, resolution(rgb), luminosity(rgb, brightness), blurriness(rgb))


@dataclass(frozen=True)
class FeatureStats:
    mean: float
    std: float
    pooled_min: float
    pooled_max: float


@dataclass(frozen=True)
class DatasetQualityStats:
    dataset: str
    count: int
    features: dict[str, FeatureStats]

    def __getitem__(self, feature: str) -> FeatureStats:
        return self.features[feature]


def minmax_normalize(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi == lo:
        return np.zeros_like(values, dtype=np.float64)
    return (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)


def dataset_stats(groups: Mapping[str, Sequence[QualityRecord]]) -> dict[str, DatasetQualityStats]:
    """Per-group mean and std of feature values min-max normalized over all groups pooled.

    Group order of the input mapping is kept in the output.
    """
    if not groups or sum(len(g) for g in groups.values()) == 0:
        raise EmptyStatsError("no quality records to summarise")
    empty = [name for name, recs in groups.items() if len(recs) == 0]
    if empty:
        raise EmptyStatsError(f"dataset group(s) without records: {', '.join(empty)}")

    raw = {
        name: {f: np.array([r.feature(f) for r in recs], dtype=np.float64) for f in FEATURES}
        for name, recs in groups.items()
    }
    bounds = {}
    for f in FEATURES:
        pooled = np.concatenate([raw[name][f] for name in groups])
        bounds[f] = (float(pooled.min()), float(pooled.max()))

    out = {}
    for name, recs in groups.items():
        feats = {}
        for f in FEATURES:
            lo, hi = bounds[f]
            norm = minmax_normalize(raw[name][f], lo, hi)
            feats[f] = FeatureStats(float(norm.mean()), float(norm.std()), lo, hi)
        out[name] = DatasetQualityStats(name, len(recs), feats)
    return out


def stats_rows(stats: Mapping[str, DatasetQualityStats]) -> list[dict]:
    return [
        {"dataset": name, "feature": f, "mean": s[f].mean, "std": s[f].std}
        for name, s in stats.items()
        for f in FEATURES
    ]


def stats_to_csv(stats: Mapping[str, DatasetQualityStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "feature", "mean", "std"])
    for row in stats_rows(stats):
        writer.writerow([row["dataset"], row["feature"], f"{row['mean']:.6f}", f"{row['std']:.6f}"])
    return buf.getvalue()


def stats_to_json(stats: Mapping[str, DatasetQualityStats]) -> str:
    return json.dumps(stats_rows(stats), indent=2) + "\n"


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def list_images(directory) -> list[Path]:
    """Image files of a directory in sorted name order."""
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)

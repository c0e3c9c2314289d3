"""Pose keypoint parsing, orientation labels and head ROI geometry.

Skeletons follow the 17-joint COCO ordering produced by AlphaPose. Image
coordinates have their origin at the top-left corner, x grows to the right
and y grows downwards.

Pose-JSON input is an array of person records::

    [{"image_id": "0001.png", "keypoints": [x0, y0, s0, ..., x16, y16, s16]}, ...]

When a pose estimator returns several people for one crop, the first record
for an image id wins (see :func:`first_per_image`).
"""
from __future__ import annotations

import enum
import json
import math
import numbers
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateROIError,
    HeadUndetectableError,
    PoseParseError,
    PoseSchemaError,
    UndetectablePoseError,
)

NUM_KEYPOINTS = 17

NOSE = 0
LEFT_EYE, RIGHT_EYE = 1, 2
LEFT_EAR, RIGHT_EAR = 3, 4
LEFT_SHOULDER, RIGHT_SHOULDER = 5, 6
LEFT_HIP, RIGHT_HIP = 11, 12

KEYPOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

DEFAULT_CONF_THRESHOLD = 0.05
SIDEWAYS_RATIO = 0.5
HEAD_TO_BODY = Fraction(2, 9)


class Orientation(str, enum.Enum):
    FRONTAL = "Frontal"
    SIDEWAYS = "Sideways"
    BACKSIDE = "Backside"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    score: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise PoseSchemaError(f"non-finite keypoint coordinate ({self.x}, {self.y})")
        if not 0.0 <= self.score <= 1.0:
            raise PoseSchemaError(f"keypoint score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class PoseSkeleton:
    image_id: str
    keypoints: tuple[Keypoint, ...]

    def __post_init__(self):
        if len(self.keypoints) != NUM_KEYPOINTS:
            raise PoseSchemaError(
                f"{self.image_id!r}: expected {NUM_KEYPOINTS} keypoints, got {len(self.keypoints)}"
            )

    @classmethod
    def from_flat(cls, image_id: str, values: Sequence[float]) -> "PoseSkeleton":
        """Build a skeleton from a flat ``x, y, score`` triple list."""
        if len(values) != 3 * NUM_KEYPOINTS:
            raise PoseSchemaError(
                f"record {image_id!r}: expected {3 * NUM_KEYPOINTS} numbers, got {len(values)}"
            )
        kps = tuple(
            Keypoint(float(values[i]), float(values[i + 1]), float(values[i + 2]))
            for i in range(0, len(values), 3)
        )
        return cls(image_id, kps)

    @classmethod
    def from_array(cls, image_id: str, arr) -> "PoseSkeleton":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (NUM_KEYPOINTS, 3):
            raise PoseSchemaError(f"{image_id!r}: keypoint array must be 17x3, got {arr.shape}")
        return cls.from_flat(image_id, arr.ravel().tolist())

    def to_flat(self) -> list[float]:
        out: list[float] = []
        for kp in self.keypoints:
            out.extend((kp.x, kp.y, kp.score))
        return out

    def as_array(self) -> np.ndarray:
        """Return a (17, 3) array of ``x, y, score`` rows."""
        return np.array(self.to_flat(), dtype=np.float64).reshape(NUM_KEYPOINTS, 3)

    def __getitem__(self, index: int) -> Keypoint:
        return self.keypoints[index]


@dataclass(frozen=True)
class HeadROI:
    """Square head box, half-open pixel bounds ``[x0, x1) x [y0, y1)``.

    ``side`` is the box side before clipping to the image.
    """

    center_x: float
    center_y: float
    x0: int
    y0: int
    x1: int
    y1: int
    side: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


def parse_pose_file(text: str) -> list[PoseSkeleton]:
    """Parse a pose-JSON document into skeletons, preserving record order."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PoseParseError(f"malformed pose JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise PoseSchemaError("pose document must be a JSON array of person records")
    skeletons = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict) or "image_id" not in rec or "keypoints" not in rec:
            raise PoseSchemaError(f"record {i}: expected an object with image_id and keypoints")
        kps = rec["keypoints"]
        if not isinstance(kps, list):
            raise PoseSchemaError(f"record {i} ({rec['image_id']!r}): keypoints must be a list")
        skeletons.append(PoseSkeleton.from_flat(str(rec["image_id"]), kps))
    return skeletons


def dump_pose_file(skeletons: Iterable[PoseSkeleton]) -> str:
    return json.dumps([{"image_id": s.image_id, "keypoints": s.to_flat()} for s in skeletons])


def first_per_image(skeletons: Iterable[PoseSkeleton]) -> list[PoseSkeleton]:
    """Keep the first skeleton seen for each image id."""
    seen = set()
    out = []
    for s in skeletons:
        if s.image_id not in seen:
            seen.add(s.image_id)
            out.append(s)
    return out


def _require(skel: PoseSkeleton, indices, threshold: float, exc_type, what: str):
    low = [KEYPOINT_NAMES[i] for i in indices if skel.keypoints[i].score < threshold]
    if low:
        raise exc_type(f"{skel.image_id!r}: {what} undetectable, low confidence on {', '.join(low)}")


def _midpoint(a: Keypoint, b: Keypoint) -> tuple[float, float]:
    return ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0)


def shoulder_length(skel: PoseSkeleton) -> float:
    ls, rs = skel[LEFT_SHOULDER], skel[RIGHT_SHOULDER]
    return math.hypot(ls.x - rs.x, ls.y - rs.y)


def upper_body_height(skel: PoseSkeleton) -> float:
    """Distance from the shoulders' midpoint to the hips' midpoint."""
    sx, sy = _midpoint(skel[LEFT_SHOULDER], skel[RIGHT_SHOULDER])
    hx, hy = _midpoint(skel[LEFT_HIP], skel[RIGHT_HIP])
    return math.hypot(sx - hx, sy - hy)


def classify_orientation(
    skel: PoseSkeleton, conf_threshold: float = DEFAULT_CONF_THRESHOLD
) -> Orientation:
    """Label a skeleton Frontal, Sideways or Backside.

    The sideways test runs first: a shoulder length under half the upper-body
    height means the subject is seen from the side. Otherwise the subject faces
    the camera when the left shoulder lies strictly to the right of the right
    shoulder in image coordinates.
    """
    _require(skel, (LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP),
             conf_threshold, UndetectablePoseError, "pose")
    torso = upper_body_height(skel)
    if torso == 0.0:
        raise UndetectablePoseError(f"{skel.image_id!r}: zero upper-body height")
    if shoulder_length(skel) / torso < SIDEWAYS_RATIO:
        return Orientation.SIDEWAYS
    if skel[LEFT_SHOULDER].x > skel[RIGHT_SHOULDER].x:
        return Orientation.FRONTAL
    return Orientation.BACKSIDE


def head_center(
    skel: PoseSkeleton, conf_threshold: float = DEFAULT_CONF_THRESHOLD
) -> tuple[float, float]:
    """Mean of the two ear coordinates."""
    _require(skel, (LEFT_EAR, RIGHT_EAR), conf_threshold, HeadUndetectableError, "head")
    return _midpoint(skel[LEFT_EAR], skel[RIGHT_EAR])


def keypoint_extent(skel: PoseSkeleton, conf_threshold: float = DEFAULT_CONF_THRESHOLD) -> float:
    """Vertical extent of the confident keypoints, a proxy for silhouette height."""
    ys = [kp.y for kp in skel.keypoints if kp.score >= conf_threshold]
    if not ys:
        raise UndetectablePoseError(f"{skel.image_id!r}: no confident keypoints")
    return max(ys) - min(ys)


def roi_side(body_height) -> int:
    """Round-half-up of 2/9 of the body height.

    Integers and other exact rationals are handled without floating point so
    crops are bit-reproducible.
    """
    if isinstance(body_height, numbers.Rational):
        return math.floor(HEAD_TO_BODY * Fraction(int(body_height.numerator), int(body_height.denominator)) + Fraction(1, 2))
    return math.floor(2.0 * float(body_height) / 9.0 + 0.5)


def square_box(cx: float, cy: float, side: int) -> tuple[int, int, int, int]:
    """Unclipped square ``(x0, y0, x1, y1)`` of ``side`` centred on ``(cx, cy)``."""
    x0 = math.floor(cx - side / 2)
    y0 = math.floor(cy - side / 2)
    return (x0, y0, x0 + side, y0 + side)


def head_roi(
    skel: PoseSkeleton,
    image_w: int,
    image_h: int,
    body_height: str | float = "image",
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
) -> HeadROI:
    """Square head box centred on the ears with side 2/9 of the body height.

    ``body_height`` is ``"image"`` (tight person crops, the default),
    ``"keypoints"`` (vertical keypoint extent) or an explicit number of pixels.
    """
    if image_w < 1 or image_h < 1:
        raise ValueError(f"image dimensions must be positive, got {image_w}x{image_h}")
    cx, cy = head_center(skel, conf_threshold)
    if body_height == "image":
        height = int(image_h)
    elif body_height == "keypoints":
        height = keypoint_extent(skel, conf_threshold)
    elif isinstance(body_height, str):
        raise ValueError(f"unknown body_height mode {body_height!r}")
    else:
        height = body_height
    side = roi_side(height)
    if side < 1:
        raise DegenerateROIError(f"{skel.image_id!r}: head box side {side} from body height {height}")
    x0, y0, x1, y1 = square_box(cx, cy, side)
    x0, x1 = max(x0, 0), min(x1, image_w)
    y0, y1 = max(y0, 0), min(y1, image_h)
    if x0 >= x1 or y0 >= y1:
        raise DegenerateROIError(f"{skel.image_id!r}: head box lies outside the {image_w}x{image_h} image")
    return HeadROI(cx, cy, x0, y0, x1, y1, side)

"""Frontal and face versions of pedestrian attribute datasets, and a verified
face-body fusion classifier for gender recognition in the wild."""
from .errors import WildfaceError
from .pose_geometry import (
    HeadROI,
    Keypoint,
    Orientation,
    PoseSkeleton,
    classify_orientation,
    head_center,
    head_roi,
    parse_pose_file,
)

__version__ = "0.1.0"

"""Pose orientation and head box on a hand-placed skeleton.

Run: python3 demos/01_pose_and_head_roi.py
"""
import numpy as np

from wildface.pose_geometry import (
    NUM_KEYPOINTS, PoseSkeleton, classify_orientation, head_roi, shoulder_length, upper_body_height,
)

# a 192x256 person crop; joints we don't care about sit in a column at x=96
arr = np.zeros((NUM_KEYPOINTS, 3))
arr[:, 0] = 96
arr[:, 1] = np.linspace(20, 240, NUM_KEYPOINTS)
arr[:, 2] = 0.9
arr[3, :2] = (86, 40)    # left ear
arr[4, :2] = (106, 40)   # right ear
arr[5, :2] = (126, 70)   # left shoulder, on the image right -> facing the camera
arr[6, :2] = (66, 70)    # right shoulder
arr[11, :2] = (116, 150)
arr[12, :2] = (76, 150)
skel = PoseSkeleton.from_array("person.png", arr)

print("shoulder length:", shoulder_length(skel))
print("upper body height:", upper_body_height(skel))
print("ratio:", shoulder_length(skel) / upper_body_height(skel))
print("orientation:", classify_orientation(skel).value)

roi = head_roi(skel, 192, 256)
print("head centre:", (roi.center_x, roi.center_y))
print("side (2/9 of 256, rounded):", roi.side)
print("box x0,y0,x1,y1:", roi.box)

# swap the shoulders: now the left one is on the image left, so we see the back
arr2 = arr.copy()
arr2[[5, 6]] = arr2[[6, 5]]
print("swapped shoulders ->", classify_orientation(PoseSkeleton.from_array("b", arr2)).value)

# squeeze the shoulders together: the person is turned sideways
arr3 = arr.copy()
arr3[5, 0], arr3[6, 0] = 100, 92
print("narrow shoulders ->", classify_orientation(PoseSkeleton.from_array("s", arr3)).value)

import numpy as np
import pytest

from wildface.pose_geometry import NUM_KEYPOINTS, PoseSkeleton


def make_skeleton(
    image_id="img",
    left_shoulder=(70.0, 50.0),
    right_shoulder=(30.0, 50.0),
    left_hip=(60.0, 110.0),
    right_hip=(40.0, 110.0),
    left_ear=(55.0, 20.0),
    right_ear=(45.0, 20.0),
    score=0.9,
    overrides=None,
):
    """Skeleton with the joints used by the rules placed explicitly; the rest sit
    below the hips with the same score."""
    arr = np.zeros((NUM_KEYPOINTS, 3))
    arr[:, 2] = score
    arr[:, 0] = 50.0
    arr[:, 1] = np.linspace(10.0, 180.0, NUM_KEYPOINTS)
    placed = {3: left_ear, 4: right_ear, 5: left_shoulder, 6: right_shoulder,
              11: left_hip, 12: right_hip}
    for i, (x, y) in placed.items():
        arr[i, :2] = (x, y)
    for i, (x, y, s) in (overrides or {}).items():
        arr[i] = (x, y, s)
    return PoseSkeleton.from_array(image_id, arr)


@pytest.fixture
def skeleton_factory():
    return make_skeleton


# acceptance tests carry @pytest.mark.criterion(n); one summary line per criterion
_criteria: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria.setdefault(crit, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_criteria):
        results = _criteria[crit]
        status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(
            f"criterion {crit}: {status} ({sum(results)}/{len(results)} checks passed)"
        )

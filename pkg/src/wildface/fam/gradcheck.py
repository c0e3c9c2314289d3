"""Central finite-difference verification of the analytic gradients."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import GradCheckAborted
from ..pose_geometry import Orientation
from .model import forward_backward
from .params import BN_EPS, FamParams

PASS_THRESHOLD = 1e-5
REL_FLOOR = 1e-8
INPUT_NAMES = ("x_body", "x_face")

DEFAULT_ORIENTATIONS = (
    Orientation.FRONTAL, Orientation.BACKSIDE,
)


@dataclass
class CheckInputs:
    x_body: np.ndarray
    x_face: np.ndarray
    frontal: np.ndarray
    labels: np.ndarray


def random_inputs(dims, seed: int = 42, orientations=DEFAULT_ORIENTATIONS) -> CheckInputs:
    """Standard-normal features for one sample per orientation, labels alternating."""
    rng = np.random.default_rng(seed)
    n = len(orientations)
    shape = (n,) + tuple(dims)
    return CheckInputs(
        x_body=rng.standard_normal(shape),
        x_face=rng.standard_normal(shape),
        frontal=np.array([Orientation(o) is Orientation.FRONTAL for o in orientations]),
        labels=(np.arange(n) % 2).astype(np.float64),
    )


def randomize_params(params: FamParams, seed: int, scale: float = 0.5) -> FamParams:
    """Copy of ``params`` with every entry perturbed, so biases, fusion and batch-norm
    settings are all away from their special initial values."""
    rng = np.random.default_rng(seed)
    out = params.copy()
    for name in out.names():
        arr = getattr(out, name)
        if name.endswith("bn_running_var"):
            arr[...] = rng.uniform(0.5, 2.0, size=arr.shape)
        else:
            arr[...] = arr + scale * rng.standard_normal(arr.shape)
    return out


@dataclass
class GradReport:
    h: float
    groups: dict[str, float] = field(default_factory=dict)
    threshold: float = PASS_THRESHOLD

    @property
    def max_rel_error(self) -> float:
        return max(self.groups.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold

    def group_passed(self, name: str) -> bool:
        return self.groups[name] < self.threshold

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "h": self.h,
            "threshold": self.threshold,
            "max_rel_error": self.max_rel_error,
            "groups": {
                k: {"max_rel_error": v, "passed": v < self.threshold}
                for k, v in self.groups.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def reference_loss(arrays: dict, frontal: np.ndarray, labels: np.ndarray, mode: str,
                   shared_head: bool, eps: float = BN_EPS):
    """Mean BCE loss written out directly in the dtype of ``arrays``.

    Kept separate from the production forward pass so the finite-difference
    side of the check does not share code with the analytic side.
    """
    one = arrays["fusion"].dtype.type(1)
    xb, xf = arrays["x_body"], arrays["x_face"]
    n = xb.shape[0]
    logits = np.empty(n, dtype=xb.dtype)
    feats = xb.copy()
    fi = np.flatnonzero(frontal)
    if fi.size:
        xc = xb[fi] * arrays["fusion"] * xf[fi]
        squeeze = xc.mean(axis=(2, 3))
        hidden = np.maximum(squeeze @ arrays["se_w1"].T + arrays["se_b1"], 0)
        gate = one / (one + np.exp(-(hidden @ arrays["se_w2"].T + arrays["se_b2"])))
        feats[fi] = xc * gate[:, :, None, None] + xb[fi]
    if shared_head:
        groups = [("", np.arange(n))]
    else:
        groups = [("", np.flatnonzero(frontal)), ("body_", np.flatnonzero(~frontal))]
    for prefix, idx in groups:
        if idx.size == 0:
            continue
        z = feats[idx].mean(axis=(2, 3)) @ arrays[prefix + "fc_w"] + arrays[prefix + "fc_b"]
        if mode == "train":
            mu = z.mean()
            var = ((z - mu) ** 2).mean()
        else:
            mu = arrays[prefix + "bn_running_mean"]
            var = arrays[prefix + "bn_running_var"]
        logits[idx] = arrays[prefix + "bn_gamma"] * (z - mu) / np.sqrt(var + eps) + arrays[prefix + "bn_beta"]
    y = labels.astype(xb.dtype)
    # log(1 + exp(-|z|)) in the working precision
    losses = np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
    return losses.mean()


def _reference_arrays(params: FamParams, inputs: CheckInputs, dtype) -> dict:
    arrays = {name: np.array(getattr(params, name), dtype=dtype) for name in params.names()}
    arrays["x_body"] = np.array(inputs.x_body, dtype=dtype)
    arrays["x_face"] = np.array(inputs.x_face, dtype=dtype)
    return arrays


def analytic_gradients(params: FamParams, inputs: CheckInputs, mode: str = "eval") -> dict:
    return forward_backward(
        params, inputs.x_body, inputs.x_face, inputs.frontal, inputs.labels, mode=mode
    ).grads


def numeric_gradient(loss_fn: Callable[[], float], arr: np.ndarray, h: float) -> np.ndarray:
    """Central differences of ``loss_fn`` with respect to every entry of ``arr`` (perturbed in place)."""
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    step = arr.dtype.type(h)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = loss_fn()
        flat[i] = orig - step
        down = loss_fn()
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise GradCheckAborted(f"non-finite loss while perturbing coordinate {i}")
        gflat[i] = float((up - down) / (2 * step))
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    a = np.abs(analytic)
    n = np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), REL_FLOOR)


def grad_check(
    params: FamParams,
    inputs: CheckInputs,
    h: float = 1e-4,
    mode: str = "eval",
    gradient_fn: Callable[[FamParams, CheckInputs, str], dict] | None = None,
) -> GradReport:
    """Compare analytic gradients with central differences for every group.

    The finite differences are taken on an independent extended-precision
    evaluation of the loss, so roundoff stays far below the gradients checked.

    ``gradient_fn`` replaces the analytic gradient source; it exists so a
    deliberately broken gradient can be fed through the same check.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"step h must lie in [1e-6, 1e-3], got {h}")
    params = params.copy()
    inputs = CheckInputs(
        np.array(inputs.x_body, dtype=np.float64), np.array(inputs.x_face, dtype=np.float64),
        np.asarray(inputs.frontal, dtype=bool), np.asarray(inputs.labels, dtype=np.float64),
    )
    arrays = _reference_arrays(params, inputs, np.longdouble)

    def loss_fn():
        return reference_loss(arrays, inputs.frontal, inputs.labels, mode, params.shared_head)

    base = loss_fn()
    if not np.isfinite(base):
        raise GradCheckAborted(f"loss is not finite ({base})")
    analytic = (gradient_fn or analytic_gradients)(params, inputs, mode)

    report = GradReport(h)
    for name in params.trainable_names() + list(INPUT_NAMES):
        numeric = numeric_gradient(loss_fn, arrays[name], h)
        err = relative_error(np.asarray(analytic[name]), numeric)
        report.groups[name] = float(err.max()) if err.size else 0.0
    return report


def corrupt_one_coordinate(grads: dict, name: str = "fusion") -> dict:
    """Double the largest-magnitude coordinate of one gradient group."""
    out = {k: np.array(v, copy=True) for k, v in grads.items()}
    flat = out[name].reshape(-1)
    flat[int(np.argmax(np.abs(flat)))] *= 2.0
    return out


def corrupted_gradient_fn(name: str = "fusion"):
    def fn(params, inputs, mode):
        return corrupt_one_coordinate(analytic_gradients(params, inputs, mode), name)

    return fn

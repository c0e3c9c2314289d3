"""Seeded verification run of the fusion module: gradients, shapes and invariants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..pose_geometry import Orientation
from .gradcheck import corrupted_gradient_fn, grad_check, random_inputs, randomize_params
from .model import channel_scales, fam_forward, predict
from .params import init_params


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value}


def run_selfcheck(
    dims=(8, 4, 3),
    seed: int = 42,
    reduction: int | None = None,
    h: float = 1e-4,
    cases: int = 50,
    inject_corruption: bool = False,
) -> list[CheckResult]:
    """Run every check once; a result's ``value`` is the worst observed error or count."""
    base = init_params(tuple(dims), reduction=reduction, seed=seed)
    params = randomize_params(base, seed)
    rng = np.random.default_rng(seed)
    results = []

    gradient_fn = corrupted_gradient_fn() if inject_corruption else None
    report = grad_check(params, random_inputs(dims, seed), h=h, gradient_fn=gradient_fn)
    results.append(CheckResult("grad_check", report.passed, report.max_rel_error))

    shape_bad = identity_bad = gating_bad = 0
    min_gap = 1.0
    zero_fusion = params.copy()
    zero_fusion.fusion[...] = 0.0
    for _ in range(cases):
        xb = rng.standard_normal(dims) * rng.uniform(0.1, 2.0)
        xf = rng.standard_normal(dims) * rng.uniform(0.1, 2.0)
        out = fam_forward(xb, xf, params)
        shape_bad += out.shape != xb.shape
        identity_bad += not np.array_equal(fam_forward(xb, xf, zero_fusion), xb)
        s = channel_scales(xb * xf, params)
        min_gap = min(min_gap, float(np.min(s)), float(np.min(1.0 - s)))
        ref = predict(xb, xf, Orientation.BACKSIDE, params)
        other = predict(xb, rng.standard_normal(dims) * 100.0, Orientation.BACKSIDE, params)
        gating_bad += ref != other
    results.append(CheckResult("shape_preservation", shape_bad == 0, float(shape_bad)))
    results.append(CheckResult("zero_fusion_identity", identity_bad == 0, float(identity_bad)))
    results.append(CheckResult("se_scale_range", min_gap > 0.0, min_gap))
    results.append(CheckResult("non_frontal_gating", gating_bad == 0, float(gating_bad)))
    return results

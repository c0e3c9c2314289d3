"""The face attention module on synthetic tensors: a forward pass, a gradient
check against finite differences, and a short training run.

Run: python3 demos/04_fam_gradients_and_training.py
"""
import numpy as np

from wildface.fam import (
    channel_scales, corrupted_gradient_fn, fam_forward, grad_check, init_params, predict,
    random_inputs, randomize_params,
)
from wildface.fam.train import TrainConfig, make_separable_dataset, toy_train
from wildface.pose_geometry import Orientation

dims = (8, 4, 3)
params = init_params(dims, seed=42)
print("reduction ratio:", params.reduction, " se_w1 shape:", params.se_w1.shape)

rng = np.random.default_rng(1)
xb, xf = rng.standard_normal(dims), rng.standard_normal(dims)
out = fam_forward(xb, xf, params)
print("output shape:", out.shape)
print("channel gates:", np.round(channel_scales(xb * params.fusion * xf, params), 3))
print("logit frontal: %.4f  backside: %.4f" % (
    predict(xb, xf, Orientation.FRONTAL, params), predict(xb, xf, Orientation.BACKSIDE, params)))

# gradients: analytic vs central differences
p = randomize_params(params, 3)
report = grad_check(p, random_inputs(dims, 3))
print()
print("grad check passed:", report.passed, " worst relative error: %.2e" % report.max_rel_error)
for name, err in report.groups.items():
    print("  %-18s %.2e" % (name, err))
bad = grad_check(p, random_inputs(dims, 3), gradient_fn=corrupted_gradient_fn())
print("with a corrupted fusion gradient -> passed:", bad.passed, " fusion error %.2f" % bad.groups["fusion"])

print()
result = toy_train(TrainConfig(epochs=10), make_separable_dataset(n=200, dims=dims))
for epoch, (loss, lr) in enumerate(zip(result.losses, result.lrs), 1):
    print("epoch %2d  loss %.4f  lr %g" % (epoch, loss, lr))
print("train accuracy:", result.accuracy)

"""Forward and backward passes of the gated face-body classifier.

Single-sample features are ``(C, H, W)`` arrays; the batched core works on
``(N, C, H, W)``. Frontal samples go through the fusion module and the fused
head, every other sample through the body-only head.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateBatchError, MissingFaceError, ShapeError
from ..pose_geometry import Orientation
from .params import BN_EPS, HEAD_TRAINABLE, FamParams


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def relu(x):
    return np.maximum(x, 0.0)


def _as_tensor(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def _check_shape(arr: np.ndarray, shape, name: str) -> None:
    if arr.shape != tuple(shape):
        raise ShapeError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")


def hadamard_fuse(x_body, x_face, fusion) -> np.ndarray:
    """Elementwise product ``x_body * fusion * x_face``."""
    xb = _as_tensor(x_body, "x_body")
    xf = _as_tensor(x_face, "x_face")
    F = _as_tensor(fusion, "fusion")
    _check_shape(xf, xb.shape, "x_face")
    _check_shape(F, xb.shape, "fusion")
    return xb * F * xf


def channel_scales(x_c, params: FamParams) -> np.ndarray:
    """Squeeze-and-excitation gates in (0, 1), one per channel."""
    xc = _as_tensor(x_c, "x_c")
    _check_shape(xc, params.dims, "x_c")
    g = xc.mean(axis=(1, 2))
    hidden = relu(params.se_w1 @ g + params.se_b1)
    return sigmoid(params.se_w2 @ hidden + params.se_b2)


def channel_attention(x_c, params: FamParams) -> np.ndarray:
    s = channel_scales(x_c, params)
    return np.asarray(x_c, dtype=np.float64) * s[:, None, None]


def fam_forward(x_body, x_face, params: FamParams) -> np.ndarray:
    xb = _as_tensor(x_body, "x_body")
    _check_shape(xb, params.dims, "x_body")
    xc = hadamard_fuse(xb, x_face, params.fusion)
    return channel_attention(xc, params) + xb


def _normalize_logits(z: np.ndarray, head: dict, mode: str):
    if mode == "eval":
        mu = head["bn_running_mean"]
        var = head["bn_running_var"]
    elif mode == "train":
        if z.shape[0] < 2:
            raise DegenerateBatchError("batch norm in train mode needs at least two samples")
        mu = z.mean()
        var = ((z - mu) ** 2).mean()
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    std = np.sqrt(var + BN_EPS)
    zhat = (z - mu) / std
    return head["bn_gamma"] * zhat + head["bn_beta"], zhat, std, mu, var


def classifier_head(features, params: FamParams, mode: str = "eval", branch: str = "fused"):
    """Average pool, linear layer and batch norm over the single logit.

    Returns a float for a ``(C, H, W)`` input and an array of logits for a
    ``(N, C, H, W)`` batch. Train mode normalizes with the batch statistics.
    """
    x = _as_tensor(features, "features")
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"features must be CxHxW or NxCxHxW, got shape {x.shape}")
    _check_shape(x[0], params.dims, "features")
    head = params.head(branch)
    z = x.mean(axis=(2, 3)) @ head["fc_w"] + head["fc_b"]
    out = _normalize_logits(z, head, mode)[0]
    return float(out[0]) if single else out


def _is_frontal(orientation) -> bool:
    if isinstance(orientation, Orientation):
        return orientation is Orientation.FRONTAL
    return Orientation(orientation) is Orientation.FRONTAL


def predict(x_body, x_face, orientation, params: FamParams, mode: str = "eval"):
    """Gated prediction: fused path for Frontal, body-only path otherwise."""
    if _is_frontal(orientation):
        if x_face is None:
            raise MissingFaceError("a frontal sample needs face features")
        return classifier_head(fam_forward(x_body, x_face, params), params, mode, "fused")
    return classifier_head(x_body, params, mode, "body")


def bce_logits_loss(logit, label):
    """Binary cross entropy on logits, ``max(z, 0) - z*y + log1p(exp(-|z|))``."""
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(loss) if loss.ndim == 0 else loss


@dataclass
class BatchResult:
    loss: float
    logits: np.ndarray
    grads: dict[str, np.ndarray] | None
    # (branch, batch mean, biased batch variance, group size) per head normalized in train mode
    batch_stats: list[tuple[str, float, float, int]]


def _prepare_batch(params, x_body, x_face, frontal, labels):
    xb = _as_tensor(x_body, "x_body")
    if xb.ndim != 4:
        raise ShapeError(f"x_body batch must be NxCxHxW, got shape {xb.shape}")
    n = xb.shape[0]
    _check_shape(xb, (n,) + params.dims, "x_body")
    frontal = np.asarray(frontal, dtype=bool)
    _check_shape(frontal, (n,), "frontal mask")
    if x_face is None:
        if frontal.any():
            raise MissingFaceError("frontal samples need face features")
        xf = np.zeros_like(xb)
    else:
        xf = _as_tensor(x_face, "x_face")
        _check_shape(xf, xb.shape, "x_face")
    y = np.asarray(labels, dtype=np.float64)
    _check_shape(y, (n,), "labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return xb, xf, frontal, y


def forward_backward(
    params: FamParams,
    x_body,
    x_face,
    frontal,
    labels,
    mode: str = "eval",
    grads: bool = True,
    singleton_fallback: bool = False,
) -> BatchResult:
    """Mean BCE loss over a batch and, optionally, its analytic gradients.

    Gradients cover every trainable parameter plus ``x_body`` and ``x_face``.
    In train mode each head normalizes over its own group of samples; a group
    of one raises unless ``singleton_fallback`` is set, in which case it is
    normalized with the running statistics.
    """
    xb, xf, frontal, y = _prepare_batch(params, x_body, x_face, frontal, labels)
    n = xb.shape[0]
    _, h, w = params.dims
    hw = h * w
    F = params.fusion

    fi = np.flatnonzero(frontal)
    bi = np.flatnonzero(~frontal)

    # fusion module on the frontal subset
    xb_f, xf_f = xb[fi], xf[fi]
    xc = xb_f * F * xf_f
    g = xc.mean(axis=(2, 3))
    a1 = g @ params.se_w1.T + params.se_b1
    hid = relu(a1)
    s = sigmoid(hid @ params.se_w2.T + params.se_b2)
    rho = xc * s[:, :, None, None] + xb_f

    feats = np.empty_like(xb)
    feats[fi] = rho
    feats[bi] = xb[bi]

    if params.shared_head:
        groups = [("fused", np.arange(n))]
    else:
        groups = [("fused", fi), ("body", bi)]

    logits = np.empty(n)
    caches = []
    batch_stats = []
    for branch, idx in groups:
        if idx.size == 0:
            continue
        head = params.head(branch)
        v = feats[idx].mean(axis=(2, 3))
        z = v @ head["fc_w"] + head["fc_b"]
        group_mode = mode
        if mode == "train" and idx.size == 1 and singleton_fallback:
            group_mode = "eval"
        out, zhat, std, mu, var = _normalize_logits(z, head, group_mode)
        if group_mode == "train":
            batch_stats.append((branch, float(mu), float(var), int(idx.size)))
        logits[idx] = out
        caches.append((branch, idx, head, v, zhat, std, group_mode))

    losses = bce_logits_loss(logits, y)
    loss = float(np.mean(losses))
    if not grads:
        return BatchResult(loss, logits, None, batch_stats)

    G = {name: np.zeros_like(getattr(params, name)) for name in params.trainable_names()}
    dlogit = (sigmoid(logits) - y) / n
    dfeats = np.zeros_like(xb)
    for branch, idx, head, v, zhat, std, group_mode in caches:
        prefix = params.head_prefix(branch)
        d_out = dlogit[idx]
        G[prefix + "bn_gamma"] += np.sum(d_out * zhat)
        G[prefix + "bn_beta"] += np.sum(d_out)
        dzhat = d_out * head["bn_gamma"]
        if group_mode == "train":
            dz = (dzhat - dzhat.mean() - zhat * np.mean(dzhat * zhat)) / std
        else:
            dz = dzhat / std
        G[prefix + "fc_w"] += v.T @ dz
        G[prefix + "fc_b"] += np.sum(dz)
        dv = np.outer(dz, head["fc_w"])
        dfeats[idx] += dv[:, :, None, None] / hw

    dxb = np.zeros_like(xb)
    dxf = np.zeros_like(xf)
    dxb[bi] = dfeats[bi]

    drho = dfeats[fi]
    dxc = drho * s[:, :, None, None]
    ds = np.sum(drho * xc, axis=(2, 3))
    da2 = ds * s * (1.0 - s)
    G["se_w2"] += da2.T @ hid
    G["se_b2"] += da2.sum(axis=0)
    da1 = (da2 @ params.se_w2) * (a1 > 0)
    G["se_w1"] += da1.T @ g
    G["se_b1"] += da1.sum(axis=0)
    dxc = dxc + (da1 @ params.se_w1)[:, :, None, None] / hw
    G["fusion"] += np.sum(dxc * xb_f * xf_f, axis=0)
    dxb[fi] = drho + dxc * F * xf_f
    dxf[fi] = dxc * xb_f * F

    G["x_body"] = dxb
    G["x_face"] = dxf
    return BatchResult(loss, logits, G, batch_stats)


def backward(x_body, x_face, orientation, label, params: FamParams) -> dict[str, np.ndarray]:
    """Eval-mode gradients of the loss of one sample.

    Keys are the trainable parameter names plus ``x_body`` and ``x_face``.
    """
    frontal = _is_frontal(orientation)
    if frontal and x_face is None:
        raise MissingFaceError("a frontal sample needs face features")
    xb = _as_tensor(x_body, "x_body")
    _check_shape(xb, params.dims, "x_body")
    xf = np.zeros_like(xb) if x_face is None else _as_tensor(x_face, "x_face")
    _check_shape(xf, params.dims, "x_face")
    res = forward_backward(params, xb[None], xf[None], [frontal], [label], mode="eval")
    G = res.grads
    G["x_body"] = G["x_body"][0]
    G["x_face"] = G["x_face"][0]
    return G


def update_running_stats(params: FamParams, batch_stats, momentum: float = 0.1) -> None:
    """Exponential update of the heads' running mean and unbiased running variance."""
    for branch, mu, var, size in batch_stats:
        prefix = params.head_prefix(branch)
        rm = getattr(params, prefix + "bn_running_mean")
        rv = getattr(params, prefix + "bn_running_var")
        unbiased = var * size / (size - 1)
        rm[...] = (1.0 - momentum) * rm + momentum * mu
        rv[...] = (1.0 - momentum) * rv + momentum * unbiased


__all__ = [
    "BatchResult", "HEAD_TRAINABLE", "backward", "bce_logits_loss", "channel_attention",
    "channel_scales", "classifier_head", "fam_forward", "forward_backward", "hadamard_fuse",
    "predict", "relu", "sigmoid", "update_running_stats",
]

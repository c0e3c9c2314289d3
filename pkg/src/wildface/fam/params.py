"""Parameter container, initialisation and the binary checkpoint format.

Checkpoint layout::

    b"WFCKPT01"                      8-byte magic
    uint64 little-endian             header length in bytes
    header                           UTF-8 JSON: dims, reduction, shared_head,
                                     array names and shapes, optional config
    float64 little-endian payload    every array flattened in header order
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError

DEFAULT_DIMS = (8, 4, 3)
BN_EPS = 1e-5

SE_NAMES = ("fusion", "se_w1", "se_b1", "se_w2", "se_b2")
HEAD_TRAINABLE = ("fc_w", "fc_b", "bn_gamma", "bn_beta")
HEAD_BUFFERS = ("bn_running_mean", "bn_running_var")

CHECKPOINT_MAGIC = b"WFCKPT01"


def default_reduction(channels: int) -> int:
    """SE reduction ratio: 16 when the bottleneck keeps two or more units,
    otherwise the largest divisor of ``channels`` up to ``channels // 2``."""
    if channels % 16 == 0 and channels // 16 >= 2:
        return 16
    for r in range(min(16, channels // 2), 0, -1):
        if channels % r == 0:
            return r
    return 1


def parse_dims(text: str) -> tuple[int, int, int]:
    """Parse ``"CxHxW"`` into a positive integer triple."""
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"dims must look like CxHxW, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"dims must be three positive integers, got {text!r}")
    return dims  # type: ignore[return-value]


@dataclass
class FamParams:
    """All weights of the face attention module and its classifier heads.

    Scalars are stored as 0-d float64 arrays so every entry can be updated in
    place. With ``shared_head`` the body-only path reuses the fused head and
    the ``body_*`` entries are ``None``.
    """

    fusion: np.ndarray
    se_w1: np.ndarray
    se_b1: np.ndarray
    se_w2: np.ndarray
    se_b2: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    body_fc_w: np.ndarray | None = None
    body_fc_b: np.ndarray | None = None
    body_bn_gamma: np.ndarray | None = None
    body_bn_beta: np.ndarray | None = None
    body_bn_running_mean: np.ndarray | None = None
    body_bn_running_var: np.ndarray | None = None
    reduction: int = field(default=1, kw_only=True)

    def __post_init__(self):
        for f in fields(self):
            if f.name == "reduction":
                continue
            v = getattr(self, f.name)
            if v is not None:
                setattr(self, f.name, np.array(v, dtype=np.float64))
        self.validate()

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.fusion.shape)  # type: ignore[return-value]

    @property
    def shared_head(self) -> bool:
        return self.body_fc_w is None

    def validate(self) -> None:
        if self.fusion.ndim != 3:
            raise ConfigError(f"fusion matrix must be CxHxW, got shape {self.fusion.shape}")
        c = self.fusion.shape[0]
        r = self.reduction
        if r < 1 or c % r != 0:
            raise ConfigError(f"reduction {r} does not divide channel count {c}")
        hidden = c // r
        expected = {
            "se_w1": (hidden, c), "se_b1": (hidden,), "se_w2": (c, hidden), "se_b2": (c,),
            "fc_w": (c,), "fc_b": (), "bn_gamma": (), "bn_beta": (),
            "bn_running_mean": (), "bn_running_var": (),
        }
        body = [n for n in self.names() if n.startswith("body_")]
        for n in body:
            expected[n] = expected[n[len("body_"):]]
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
        partial = [getattr(self, "body_" + n) is None for n in HEAD_TRAINABLE + HEAD_BUFFERS]
        if any(partial) and not all(partial):
            raise ConfigError("body head parameters must be all present or all absent")
        for name in self.names():
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError(f"{name} contains non-finite values")
        for prefix in ("",) if self.shared_head else ("", "body_"):
            if getattr(self, prefix + "bn_running_var") <= 0:
                raise ConfigError(f"{prefix}bn_running_var must be positive")

    def names(self) -> list[str]:
        """Names of all present arrays, trainable and buffers, in checkpoint order."""
        return [
            f.name for f in fields(self)
            if f.name != "reduction" and getattr(self, f.name) is not None
        ]

    def trainable_names(self) -> list[str]:
        heads = ("",) if self.shared_head else ("", "body_")
        return list(SE_NAMES) + [p + n for p in heads for n in HEAD_TRAINABLE]

    def head(self, branch: str) -> dict[str, np.ndarray]:
        """Arrays of the ``"fused"`` or ``"body"`` classifier head, keyed without prefix."""
        prefix = "body_" if branch == "body" and not self.shared_head else ""
        return {n: getattr(self, prefix + n) for n in HEAD_TRAINABLE + HEAD_BUFFERS}

    def head_prefix(self, branch: str) -> str:
        return "body_" if branch == "body" and not self.shared_head else ""

    def copy(self) -> "FamParams":
        kwargs = {n: getattr(self, n).copy() for n in self.names()}
        return FamParams(**kwargs, reduction=self.reduction)

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in self.names()])

    def equals(self, other: "FamParams") -> bool:
        return (
            self.reduction == other.reduction
            and self.names() == other.names()
            and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in self.names())
        )


def init_params(
    dims: tuple[int, int, int] = DEFAULT_DIMS,
    reduction: int | None = None,
    seed: int = 42,
    shared_head: bool = False,
) -> FamParams:
    """Fusion matrix of ones, linear weights uniform in +-1/sqrt(fan_in), zero biases,
    identity batch norm."""
    c, h, w = dims
    r = default_reduction(c) if reduction is None else reduction
    if r < 1 or c % r != 0:
        raise ConfigError(f"reduction {r} does not divide channel count {c}")
    hidden = c // r
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    kwargs = dict(
        fusion=np.ones((c, h, w)),
        se_w1=uniform((hidden, c), c),
        se_b1=np.zeros(hidden),
        se_w2=uniform((c, hidden), hidden),
        se_b2=np.zeros(c),
        fc_w=uniform((c,), c),
        fc_b=0.0, bn_gamma=1.0, bn_beta=0.0, bn_running_mean=0.0, bn_running_var=1.0,
    )
    if not shared_head:
        kwargs.update(
            body_fc_w=uniform((c,), c),
            body_fc_b=0.0, body_bn_gamma=1.0, body_bn_beta=0.0,
            body_bn_running_mean=0.0, body_bn_running_var=1.0,
        )
    return FamParams(**kwargs, reduction=r)


def checkpoint_bytes(params: FamParams, config: dict | None = None) -> bytes:
    header = {
        "format": "wildface-fam",
        "version": 1,
        "dims": list(params.dims),
        "reduction": params.reduction,
        "shared_head": params.shared_head,
        "arrays": [{"name": n, "shape": list(getattr(params, n).shape)} for n in params.names()],
        "config": config or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = params.flat().astype("<f8").tobytes()
    return CHECKPOINT_MAGIC + struct.pack("<Q", len(head)) + head + payload


def params_from_bytes(data: bytes) -> tuple[FamParams, dict]:
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a wildface FAM checkpoint")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    flat = np.frombuffer(data[16 + hlen:], dtype="<f8").astype(np.float64)
    arrays = {}
    pos = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        if pos + size > flat.size:
            raise ValueError("checkpoint payload is truncated")
        arrays[spec["name"]] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    if pos != flat.size:
        raise ValueError(f"checkpoint payload has {flat.size - pos} trailing values")
    return FamParams(**arrays, reduction=int(header["reduction"])), header.get("config", {})


def save_checkpoint(path, params: FamParams, config: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, config))


def load_checkpoint(path) -> tuple[FamParams, dict]:
    return params_from_bytes(Path(path).read_bytes())

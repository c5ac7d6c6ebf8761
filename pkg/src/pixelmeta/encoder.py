"""The learnable pixel encoder: input d -> h1 -> h2 -> latent z.

Rectifier on the hidden layers, identity output. Forward and backward are
written out by hand so gradients can be audited against finite differences.
Parameters are held in float64 for numeric fidelity and serialized as f32
tensor blobs next to a JSON config echo.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError, ValidationError
from .tensorio import load_tensor, save_tensor

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class EncoderParams:
    w1: np.ndarray  # (h1, d)
    b1: np.ndarray  # (h1,)
    w2: np.ndarray  # (h2, h1)
    b2: np.ndarray  # (h2,)
    w3: np.ndarray  # (z, h2)
    b3: np.ndarray  # (z,)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.w3.shape[0]

    @property
    def hidden_dims(self) -> tuple[int, int]:
        return self.w1.shape[0], self.w2.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return self.w1, self.b1, self.w2, self.b2, self.w3, self.b3

    def copy(self) -> "EncoderParams":
        return EncoderParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(*(np.zeros_like(a) for a in self.arrays()))


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_encoder(
    input_dim: int,
    hidden: tuple[int, int] = (128, 128),
    latent_dim: int = 64,
    seed=None,
) -> EncoderParams:
    rng = np.random.default_rng(seed)
    h1, h2 = hidden
    return EncoderParams(
        w1=_glorot(rng, h1, input_dim),
        b1=np.zeros(h1),
        w2=_glorot(rng, h2, h1),
        b2=np.zeros(h2),
        w3=_glorot(rng, latent_dim, h2),
        b3=np.zeros(latent_dim),
    )


def forward_batch(params: EncoderParams, x: np.ndarray):
    """Returns (latent (n, z), cache for backward)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ShapeError(
            f"input has {x.shape[1]} features, encoder expects {params.input_dim}"
        )
    z1 = x @ params.w1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2.T + params.b2
    a2 = np.maximum(z2, 0.0)
    out = a2 @ params.w3.T + params.b3
    return out, (x, z1, a1, z2, a2)


def backward_batch(
    params: EncoderParams, cache, d_out: np.ndarray, grads: EncoderParams
) -> None:
    """Accumulate parameter gradients for d(loss)/d(latent) = d_out."""
    x, z1, a1, z2, a2 = cache
    grads.w3 += d_out.T @ a2
    grads.b3 += d_out.sum(axis=0)
    d_a2 = d_out @ params.w3
    d_z2 = d_a2 * (z2 > 0.0)
    grads.w2 += d_z2.T @ a1
    grads.b2 += d_z2.sum(axis=0)
    d_a1 = d_z2 @ params.w2
    d_z1 = d_a1 * (z1 > 0.0)
    grads.w1 += d_z1.T @ x
    grads.b1 += d_z1.sum(axis=0)


def encode_batch(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    out, _ = forward_batch(params, x)
    return out


def encode(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Embed a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a single vector, got shape {x.shape}")
    return encode_batch(params, x[None])[0]


def params_checksum(params: EncoderParams) -> str:
    h = hashlib.sha256()
    for arr in params.arrays():
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()


def save_checkpoint(params: EncoderParams, path: str | Path, config: dict) -> None:
    """Write parameter blobs + config echo into a checkpoint directory.

    Writes are staged under temporary names and renamed, so an interrupted
    save never leaves a half-written checkpoint in place of a valid one.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, arr in zip(PARAM_NAMES, params.arrays()):
        tmp = path / f".{name}.pxt.tmp"
        save_tensor(arr.astype(np.float32), tmp)
        os.replace(tmp, path / f"{name}.pxt")
    meta = dict(config)
    meta["params_checksum"] = params_checksum(params)
    tmp = path / ".config.json.tmp"
    with open(tmp, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    os.replace(tmp, path / "config.json")


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, dict]:
    path = Path(path)
    if not (path / "config.json").exists():
        raise ValidationError(f"not a checkpoint directory: {path}")
    with open(path / "config.json") as f:
        meta = json.load(f)
    arrays = []
    for name in PARAM_NAMES:
        arrays.append(load_tensor(path / f"{name}.pxt").astype(np.float64))
    params = EncoderParams(*arrays)
    for arr in params.arrays():
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"checkpoint {path} contains non-finite parameters")
    return params, meta

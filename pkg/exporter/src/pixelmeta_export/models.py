"""TorchScript backbone adapters.

The exporter is model-agnostic: each backbone is a user-supplied TorchScript
checkpoint with a fixed I/O contract, so any architecture (a VGG-style CAM
classifier, an atrous-conv segmentation trunk, a saliency net) can be
plugged in without this package knowing its definition.

Contracts, all taking a float32 (1, 3, H, W) batch with values in [0, 1]:

  CAM module       -> (1, N_CAM, h, w) raw per-class activation maps
  feature module   -> (1, d, h, w) feature maps
  saliency module  -> (1, 1, h, w) raw saliency scores
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError
from .resize import resize_bilinear


@dataclass
class ModelBundle:
    module: torch.jit.ScriptModule
    path: Path
    sha256: str


def load_torchscript(path: str | Path, what: str) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{what} checkpoint not found: {path}")
    try:
        module = torch.jit.load(str(path), map_location="cpu")
    except Exception as e:
        raise ConfigError(f"{what} checkpoint {path} is not TorchScript: {e}") from e
    module.eval()
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return ModelBundle(module, path, digest)


def _run(bundle: ModelBundle, image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ConfigError(f"expected a (3, H, W) image, got {image.shape}")
    with torch.no_grad():
        out = bundle.module(torch.from_numpy(image[None].astype(np.float32)))
    if not isinstance(out, torch.Tensor) or out.ndim != 4 or out.shape[0] != 1:
        raise ConfigError(
            f"{bundle.path.name}: model must return a (1, C, h, w) tensor"
        )
    arr = out[0].numpy().astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{bundle.path.name}: model produced non-finite values")
    return arr


def _minmax(arr: np.ndarray) -> np.ndarray:
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def cam_heatmaps(bundle: ModelBundle, image: np.ndarray, n_cam: int,
                 size: int) -> np.ndarray:
    """Per-class activation maps, each min-max normalized to [0, 1] and
    resized to the target grid."""
    maps = _run(bundle, image)
    if maps.shape[0] != n_cam:
        raise ConfigError(
            f"CAM model emits {maps.shape[0]} maps, class list declares {n_cam}"
        )
    out = np.stack([resize_bilinear(_minmax(m), size, size) for m in maps])
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def feature_map(bundle: ModelBundle, image: np.ndarray, size: int) -> np.ndarray:
    """H x W x d feature tensor upsampled to the target grid."""
    feats = _run(bundle, image)
    up = resize_bilinear(feats.transpose(1, 2, 0), size, size)
    return up.astype(np.float32)


def saliency_map(bundle: ModelBundle, image: np.ndarray, size: int,
                 activation: str = "sigmoid") -> np.ndarray:
    """Class-agnostic saliency in [0, 1] on the target grid.

    Activation runs after resampling so minmax spans exactly [0, 1].
    """
    raw = _run(bundle, image)
    if raw.shape[0] != 1:
        raise ConfigError(f"saliency model must emit one channel, got {raw.shape[0]}")
    scores = resize_bilinear(raw[0], size, size)
    if activation == "sigmoid":
        scores = 1.0 / (1.0 + np.exp(-scores))
    elif activation == "minmax":
        scores = _minmax(scores)
    elif activation != "none":
        raise ConfigError(f"unknown saliency activation {activation!r}")
    return np.clip(scores, 0.0, 1.0).astype(np.float32)

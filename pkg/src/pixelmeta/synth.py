"""Synthetic desk-scale datasets.

Every sample is built from blob-shaped foreground regions:

  * features     pixels of class c draw from a Gaussian around a class mean;
                 the means live in an informative subspace while the trailing
                 nuisance dimensions carry high-variance noise shared by all
                 classes, so nearest-neighbor search on raw features is
                 mediocre and an encoder has something to learn.
  * heatmaps     one designated activation map per class fires on a part of
                 the blob covering `cam_coverage` of the foreground, plus a
                 few high-valued distractor blobs in the background; the
                 remaining maps are low-level noise.
  * saliency     foreground indicator plus bounded uniform noise.
  * gt mask      blob labels, optionally ringed with ignore pixels.
  * embeddings   each designated activation class embeds close to its
                 segmentation class, all other pairs stay dissimilar.

Generation is a pure function of the config: same seed, same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .data import IGNORE_LABEL
from .errors import ConfigError
from .tensorio import save_tensor


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 7
    n_base: int = 5
    height: int = 32
    width: int = 32
    feature_dim: int = 12
    nuisance_dims: int = 4
    embed_dim: int = 24
    n_cam: int = 10
    samples_per_class: int = 12
    noise: float = 0.05
    separation: float = 0.5
    nuisance_scale: float = 20.0
    blob_radius: tuple[float, float] = (0.15, 0.25)
    cam_coverage: float = 0.85
    saliency_noise: float = 0.3
    multi_class_fraction: float = 0.0
    ignore_border: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        if not 0 < self.n_base < self.n_classes:
            raise ConfigError("n_base must leave at least one novel class")
        if self.height * self.width < 4:
            raise ConfigError("image area must be at least 4 pixels")
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be at least 2")
        if not 0 <= self.nuisance_dims < self.feature_dim:
            raise ConfigError("nuisance_dims must leave informative dimensions")
        if not 0.0 < self.cam_coverage <= 1.0:
            raise ConfigError("cam_coverage must be in (0, 1]")
        if self.n_cam < self.n_classes:
            raise ConfigError("need one designated CAM class per segmentation class")
        if self.samples_per_class < 2:
            raise ConfigError("need at least 2 samples per class")


CAM_ID_OFFSET = 1000  # CAM ids live far from segmentation ids; never overlap


def _ellipse(rng: np.random.Generator, height: int, width: int,
             r_lo: float, r_hi: float) -> np.ndarray:
    cy = rng.uniform(0.30, 0.70) * height
    cx = rng.uniform(0.30, 0.70) * width
    ry = rng.uniform(r_lo, r_hi) * height
    rx = rng.uniform(r_lo, r_hi) * width
    theta = rng.uniform(0.0, np.pi)
    yy, xx = np.mgrid[0:height, 0:width]
    dy, dx = yy - cy, xx - cx
    u = (dx * np.cos(theta) + dy * np.sin(theta)) / rx
    v = (-dx * np.sin(theta) + dy * np.cos(theta)) / ry
    return u * u + v * v <= 1.0


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def _class_means(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Means for background (row 0) and each class, in the informative subspace."""
    info = cfg.feature_dim - cfg.nuisance_dims
    n = cfg.n_classes + 1
    means = np.zeros((n, cfg.feature_dim))
    if info >= n:
        q, _ = np.linalg.qr(rng.standard_normal((info, n)))
        means[:, :info] = q.T * cfg.separation
    else:
        # not enough room for orthogonal means; fall back to random directions
        vecs = rng.standard_normal((n, info))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        means[:, :info] = vecs * cfg.separation
    return means


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _embedding_matrix(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Rows: segmentation classes 1..n_classes, then CAM classes.

    CAM class k (k <= n_classes) is the designated partner of class k and
    embeds within a few degrees of it; the rest stay dissimilar to every
    segmentation class.
    """
    def sample_away_from(existing: list[np.ndarray]) -> np.ndarray:
        while True:
            v = _unit(rng.standard_normal(cfg.embed_dim))
            if all(abs(float(v @ e)) <= 0.5 for e in existing):
                return v

    seg: list[np.ndarray] = []
    for _ in range(cfg.n_classes):
        seg.append(sample_away_from(seg))
    cam: list[np.ndarray] = []
    for k in range(cfg.n_cam):
        if k < cfg.n_classes:
            cam.append(_unit(seg[k] + 0.18 * _unit(rng.standard_normal(cfg.embed_dim))))
        else:
            cam.append(sample_away_from(seg))
    return np.asarray(seg + cam, dtype=np.float64)


def generate_synthetic_dataset(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Write manifest plus tensor files under `out_dir`; returns manifest path."""
    cfg.validate()
    out_dir = Path(out_dir)
    tensor_dir = out_dir / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(cfg.seed)
    H, W = cfg.height, cfg.width
    means = _class_means(rng, cfg)
    embeddings = _embedding_matrix(rng, cfg)
    save_tensor(embeddings.astype(np.float32), out_dir / "embeddings.pxt")

    noise_scales = np.full(cfg.feature_dim, cfg.noise)
    if cfg.nuisance_dims:
        noise_scales[-cfg.nuisance_dims:] *= cfg.nuisance_scale

    samples = []
    for c in range(1, cfg.n_classes + 1):
        for i in range(cfg.samples_per_class):
            sid = f"c{c:02d}_s{i:03d}"
            labels = [c]

            r_lo, r_hi = cfg.blob_radius
            label_field = np.zeros((H, W), dtype=np.int64)
            label_field[_ellipse(rng, H, W, r_lo, r_hi)] = c
            if rng.uniform() < cfg.multi_class_fraction:
                extra = int(rng.choice([k for k in range(1, cfg.n_classes + 1) if k != c]))
                blob = _ellipse(rng, H, W, 0.7 * r_lo, 0.7 * r_hi) & (label_field == 0)
                if blob.any():
                    label_field[blob] = extra
                    labels.append(extra)

            mask = label_field.astype(np.uint16)
            if cfg.ignore_border:
                fg = label_field > 0
                ring = _dilate(fg) & ~fg
                mask[ring] = IGNORE_LABEL

            features = means[label_field] + rng.standard_normal(
                (H, W, cfg.feature_dim)) * noise_scales
            heatmaps = rng.uniform(0.0, 0.15, size=(cfg.n_cam, H, W))
            for cls in labels:
                blob = label_field == cls
                flat = np.flatnonzero(blob)
                part = flat[rng.integers(len(flat))]
                py, px = np.unravel_index(part, (H, W))
                yy, xx = np.nonzero(blob)
                dist2 = (yy - py) ** 2 + (xx - px) ** 2
                order = np.lexsort((yy * W + xx, dist2))
                keep = max(1, int(round(cfg.cam_coverage * len(flat))))
                hot = order[:keep]
                cam_map = heatmaps[cls - 1]
                cam_map[yy[hot], xx[hot]] = rng.uniform(0.80, 1.00, size=keep)
                for _ in range(int(rng.integers(1, 3))):
                    distract = _ellipse(rng, H, W, 0.08, 0.15) & (label_field == 0)
                    cam_map[distract] = rng.uniform(0.70, 0.95, size=int(distract.sum()))
            saliency = np.clip(
                (label_field > 0).astype(np.float64)
                + rng.uniform(-cfg.saliency_noise, cfg.saliency_noise, size=(H, W)),
                0.0, 1.0,
            )

            paths = {
                "features": f"tensors/{sid}_feat.pxt",
                "heatmaps": f"tensors/{sid}_cam.pxt",
                "saliency": f"tensors/{sid}_sal.pxt",
                "gt_mask": f"tensors/{sid}_gt.pxt",
            }
            save_tensor(features.astype(np.float32), out_dir / paths["features"])
            save_tensor(np.clip(heatmaps, 0.0, 1.0).astype(np.float32),
                        out_dir / paths["heatmaps"])
            save_tensor(saliency.astype(np.float32), out_dir / paths["saliency"])
            save_tensor(mask, out_dir / paths["gt_mask"])
            samples.append({"id": sid, "labels": sorted(labels), **paths})

    manifest = {
        "classes": {str(c): f"class_{c}" for c in range(1, cfg.n_classes + 1)},
        "cam_classes": {
            str(CAM_ID_OFFSET + k): f"cam_{k}" for k in range(1, cfg.n_cam + 1)
        },
        "embedding_path": "embeddings.pxt",
        "splits": {
            "base": list(range(1, cfg.n_base + 1)),
            "novel": list(range(cfg.n_base + 1, cfg.n_classes + 1)),
        },
        "samples": samples,
        "generator": {"config": asdict(cfg)},
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2)
    return manifest_path

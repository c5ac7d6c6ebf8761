"""Pseudo pixel-level masks from image-level labels.

Pipeline per image label c:

  1. weight every activation map by the reciprocal cosine distance between
     the word embeddings of c and the map's class,
  2. fuse the maps with the normalized weights,
  3. min-max normalize the fused map to [0, 1],
  4. zero it outside the salient region (optional hard gate),
  5. threshold the per-class maps into a label field, argmax across labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BACKGROUND, Dataset, EmbeddingTable, SampleRecord
from .errors import ConfigError, NumericError, ShapeError


@dataclass(frozen=True)
class PseudoLabelConfig:
    saliency_threshold: float = 0.5
    mask_threshold: float = 0.5
    use_saliency: bool = True
    weight_epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.saliency_threshold <= 1.0:
            raise ConfigError("saliency_threshold must be in [0, 1]")
        if not 0.0 <= self.mask_threshold <= 1.0:
            raise ConfigError("mask_threshold must be in [0, 1]")
        if self.weight_epsilon <= 0.0:
            raise ConfigError("weight_epsilon must be > 0")


@dataclass(frozen=True)
class ClassWeights:
    target_class: int
    weights: np.ndarray  # one weight per CAM class, sums to 1


def compute_class_weights(
    target: int,
    embeddings: EmbeddingTable,
    cam_class_ids: list[int],
    epsilon: float = 1e-6,
) -> ClassWeights:
    """Reciprocal cosine-distance weights between target and CAM classes.

    Raw weight for CAM class k is 1 / max(epsilon, 1 - cos(e_target, e_k));
    the returned vector is normalized to sum to 1 so fusion stays convex.
    """
    if not cam_class_ids:
        raise ConfigError("cam_class_ids is empty")
    target_vec = embeddings.vector(target)
    tn = np.linalg.norm(target_vec)
    if tn == 0.0:
        raise NumericError(f"zero-norm embedding for class {target}")
    raw = np.empty(len(cam_class_ids))
    for i, cid in enumerate(cam_class_ids):
        vec = embeddings.vector(cid)
        n = np.linalg.norm(vec)
        if n == 0.0:
            raise NumericError(f"zero-norm embedding for CAM class {cid}")
        cos = float(target_vec @ vec) / (tn * n)
        raw[i] = 1.0 / max(epsilon, 1.0 - cos)
    return ClassWeights(target, raw / raw.sum())


def fuse_heatmaps(weights: ClassWeights, heatmaps: np.ndarray) -> np.ndarray:
    """Weighted sum over the stack: sum_k w_k * T_k, elementwise."""
    if heatmaps.ndim != 3:
        raise ShapeError(f"heatmap stack must be N_CAM x H x W, got {heatmaps.shape}")
    if len(weights.weights) != heatmaps.shape[0]:
        raise ShapeError(
            f"{len(weights.weights)} weights for {heatmaps.shape[0]} heatmaps"
        )
    return np.tensordot(weights.weights, heatmaps.astype(np.float64), axes=1)


def normalize_heatmap(heatmap: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant map has no signal and becomes 0."""
    lo = float(heatmap.min())
    hi = float(heatmap.max())
    if hi <= lo:
        return np.zeros_like(heatmap)
    return (heatmap - lo) / (hi - lo)


def apply_saliency_gate(
    heatmap: np.ndarray, saliency: np.ndarray, threshold: float = 0.5
) -> np.ndarray:
    """Hard binary gate: keep pixels whose saliency reaches the threshold."""
    if heatmap.shape != saliency.shape:
        raise ShapeError(
            f"heatmap {heatmap.shape} vs saliency {saliency.shape}"
        )
    return np.where(saliency >= threshold, heatmap, 0.0)


def heatmaps_to_mask(
    per_class: list[tuple[int, np.ndarray]], threshold: float = 0.5
) -> np.ndarray:
    """Per pixel: the argmax class if its value reaches the threshold, else 0.

    Argmax ties break toward the lower class id.
    """
    if not per_class:
        raise ConfigError("need at least one (class, heatmap) pair")
    ids = [c for c, _ in per_class]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate class ids in {ids}")
    order = np.argsort(ids, kind="stable")
    ids_sorted = np.asarray([ids[i] for i in order], dtype=np.uint16)
    maps = [per_class[i][1] for i in order]
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise ShapeError("per-class heatmaps disagree on H x W")
    stack = np.stack(maps)
    best = stack.argmax(axis=0)  # first occurrence wins = lowest class id
    values = np.take_along_axis(stack, best[None], axis=0)[0]
    mask = np.where(values >= threshold, ids_sorted[best], BACKGROUND)
    return mask.astype(np.uint16)


def generate_pseudo_mask(
    dataset: Dataset, record: SampleRecord, config: PseudoLabelConfig
) -> np.ndarray:
    """Full pipeline for one sample, one fused map per image-level label."""
    heatmaps = dataset.load_heatmaps(record)
    saliency = dataset.load_saliency(record) if config.use_saliency else None
    per_class = []
    for c in sorted(record.labels):
        weights = compute_class_weights(
            c, dataset.embeddings, dataset.cam_class_ids, config.weight_epsilon
        )
        fused = normalize_heatmap(fuse_heatmaps(weights, heatmaps))
        if saliency is not None:
            fused = apply_saliency_gate(fused, saliency, config.saliency_threshold)
        per_class.append((c, fused))
    return heatmaps_to_mask(per_class, config.mask_threshold)

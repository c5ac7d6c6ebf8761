"""Meta-test segmentation: pixel-wise exact k-NN against support pixels.

With an encoder checkpoint the search runs in the latent space; without one
it runs on raw backbone features (the no-encoder ablation). Brute force on
purpose: index sizes stay small and correctness beats speed here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import BACKGROUND, Dataset, SampleRecord
from .encoder import EncoderParams, encode_batch
from .errors import ConfigError, SamplingError, ShapeError
from .metalearn import concat_sample_sets, sample_pixels, _pairwise


@dataclass(frozen=True)
class SupportIndex:
    vectors: np.ndarray  # (n, dim)
    labels: np.ndarray  # (n,)
    metric: str

    def __post_init__(self):
        if len(self.vectors) != len(self.labels) or len(self.labels) == 0:
            raise ShapeError("index vectors and labels must be nonempty and parallel")
        has_bg = bool((self.labels == BACKGROUND).any())
        has_fg = bool((self.labels != BACKGROUND).any())
        if not (has_bg and has_fg):
            raise SamplingError(
                "support index needs at least one background and one foreground entry"
            )
        # canonical label order makes classification independent of how the
        # entries were inserted (distance ties resolve toward lower ids)
        order = np.argsort(self.labels, kind="stable")
        object.__setattr__(self, "vectors", np.asarray(self.vectors)[order])
        object.__setattr__(self, "labels", np.asarray(self.labels)[order])

    def __len__(self) -> int:
        return len(self.labels)


def build_support_index(
    params: EncoderParams | None,
    dataset: Dataset,
    support: Sequence[SampleRecord],
    masks: Mapping[str, np.ndarray] | Callable[[object], np.ndarray],
    n_pix: int = 100,
    seed=None,
    metric: str = "sqeuclid",
) -> SupportIndex:
    """Sample labeled support pixels and embed them (unless params is None)."""
    rng = np.random.default_rng(seed)
    mask_for = masks if callable(masks) else (lambda rec: masks[rec.sample_id])
    sets = [
        sample_pixels(dataset.load_features(rec), mask_for(rec), n_pix, rng)
        for rec in support
    ]
    pixels = concat_sample_sets(sets)
    vectors = encode_batch(params, pixels.features) if params is not None \
        else pixels.features
    return SupportIndex(vectors, pixels.labels, metric)


def _classify_batch(index: SupportIndex, queries: np.ndarray, k: int) -> np.ndarray:
    """Majority label among the k nearest index entries, per query row.

    Ties break by smaller mean distance among the selected neighbors, then
    by lower class id. The index is label-sorted and the distance sort is
    stable, so results never depend on insertion order.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if queries.shape[1] != index.vectors.shape[1]:
        raise ShapeError(
            f"query dim {queries.shape[1]} vs index dim {index.vectors.shape[1]}"
        )
    if k > len(index):
        warnings.warn(
            f"k={k} exceeds support index size {len(index)}; clamping",
            RuntimeWarning,
        )
        k = len(index)
    d, _ = _pairwise(index.metric, np.asarray(queries, dtype=np.float64),
                     index.vectors.astype(np.float64))
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    rows = np.arange(len(queries))[:, None]
    nbr_labels = index.labels[nearest]
    nbr_dist = d[rows, nearest]

    classes = np.unique(index.labels)
    best_label = np.full(len(queries), -1, dtype=np.int64)
    best_count = np.full(len(queries), -1)
    best_mean = np.full(len(queries), np.inf)
    for c in classes:  # ascending ids, so ties settle on the lower id
        member = nbr_labels == c
        count = member.sum(axis=1)
        with np.errstate(invalid="ignore"):
            mean = np.where(count > 0, (nbr_dist * member).sum(axis=1) / count, np.inf)
        win = (count > best_count) | ((count == best_count) & (mean < best_mean))
        best_label = np.where(win, c, best_label)
        best_mean = np.where(win, mean, best_mean)
        best_count = np.where(win, count, best_count)
    return best_label


def knn_classify(index: SupportIndex, query: np.ndarray, k: int = 1) -> int:
    """Label for a single query vector."""
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1:
        raise ShapeError(f"expected a single vector, got shape {query.shape}")
    return int(_classify_batch(index, query[None], k)[0])


def segment_query(
    params: EncoderParams | None,
    index: SupportIndex,
    query_features: np.ndarray,
    k: int = 1,
) -> np.ndarray:
    """Predicted mask for one query image; no post-processing."""
    if query_features.ndim != 3:
        raise ShapeError(
            f"query features must be H x W x d, got {query_features.shape}"
        )
    h, w, d = query_features.shape
    flat = np.asarray(query_features, dtype=np.float64).reshape(h * w, d)
    vectors = encode_batch(params, flat) if params is not None else flat
    labels = _classify_batch(index, vectors, k)
    return labels.reshape(h, w).astype(np.uint16)

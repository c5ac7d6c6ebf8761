"""Episodic training of the pixel encoder: prototypes and prototypical loss.

The default objective averages exp(-distance) between each labeled query
pixel's embedding and its own class prototype, negated, with prototypes
recomputed from the support pixels through the current encoder so gradient
flows through both paths. A softmax cross-entropy variant over all
prototypes is available behind `loss_variant="softmax"`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .data import IGNORE_LABEL, Dataset, Episode, sample_episode
from .encoder import (
    EncoderParams,
    backward_batch,
    forward_batch,
    init_encoder,
    params_checksum,
    save_checkpoint,
)
from .errors import (
    ConfigError,
    MissingPrototypeError,
    NumericError,
    SamplingError,
    ShapeError,
)
from .pseudolabel import PseudoLabelConfig, generate_pseudo_mask

METRICS = ("sqeuclid", "cosine")
LOSS_VARIANTS = ("eq5", "softmax")


@dataclass
class PixelSampleSet:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(ids, counts)}


def concat_sample_sets(sets: list[PixelSampleSet]) -> PixelSampleSet:
    return PixelSampleSet(
        np.concatenate([s.features for s in sets], axis=0),
        np.concatenate([s.labels for s in sets], axis=0),
    )


def sample_pixels(
    features: np.ndarray, mask: np.ndarray, n_pix: int, seed=None
) -> PixelSampleSet:
    """Per label present in the mask, draw min(count, n_pix) pixels uniformly
    without replacement. Ignore-labeled pixels are never sampled."""
    if n_pix < 1:
        raise ConfigError("n_pix must be >= 1")
    if features.shape[:2] != mask.shape:
        raise ShapeError(
            f"features {features.shape[:2]} vs mask {mask.shape}"
        )
    rng = np.random.default_rng(seed)
    flat_mask = np.asarray(mask).ravel()
    flat_feat = np.asarray(features, dtype=np.float64).reshape(len(flat_mask), -1)
    labels_present = [int(c) for c in np.unique(flat_mask) if c != IGNORE_LABEL]
    if not labels_present:
        raise SamplingError("mask has no non-ignore pixels to sample")
    chunks, labels = [], []
    for c in labels_present:
        pos = np.flatnonzero(flat_mask == c)
        take = min(len(pos), n_pix)
        chosen = np.sort(rng.choice(len(pos), size=take, replace=False))
        chunks.append(flat_feat[pos[chosen]])
        labels.append(np.full(take, c, dtype=np.int64))
    return PixelSampleSet(np.concatenate(chunks), np.concatenate(labels))


def _prototype_matrix(params: EncoderParams, support: PixelSampleSet):
    """Embed support pixels and average per class.

    Returns (classes, counts, P, latent, cache) with classes sorted ascending.
    """
    if len(support) == 0:
        raise SamplingError("support sample set is empty")
    latent, cache = forward_batch(params, support.features)
    classes = np.unique(support.labels)
    counts = np.array([(support.labels == c).sum() for c in classes])
    protos = np.stack([
        latent[support.labels == c].mean(axis=0) for c in classes
    ])
    return classes, counts, protos, latent, cache


def compute_prototypes(
    params: EncoderParams, support: PixelSampleSet
) -> dict[int, np.ndarray]:
    """Per-class mean of the embedded support pixels."""
    classes, _, protos, _, _ = _prototype_matrix(params, support)
    return {int(c): protos[i] for i, c in enumerate(classes)}


def _pairwise(metric: str, u: np.ndarray, p: np.ndarray):
    """Distance matrix D (n_query x n_proto) plus a cache for the backward pass."""
    if metric == "sqeuclid":
        d = (
            (u * u).sum(axis=1)[:, None]
            - 2.0 * (u @ p.T)
            + (p * p).sum(axis=1)[None, :]
        )
        return np.maximum(d, 0.0), (u, p)
    if metric == "cosine":
        nu = np.linalg.norm(u, axis=1)
        np_ = np.linalg.norm(p, axis=1)
        if nu.min() < 1e-12 or np_.min() < 1e-12:
            raise NumericError("cosine distance undefined for zero-norm embedding")
        uhat = u / nu[:, None]
        phat = p / np_[:, None]
        cos = uhat @ phat.T
        return 1.0 - cos, (nu, np_, uhat, phat, cos)
    raise ConfigError(f"unknown metric {metric!r}, want one of {METRICS}")


def _pairwise_backward(metric: str, aux, g: np.ndarray):
    """Given dL/dD = g, return (dL/du, dL/dp)."""
    if metric == "sqeuclid":
        u, p = aux
        du = 2.0 * (g.sum(axis=1)[:, None] * u - g @ p)
        dp = 2.0 * (g.sum(axis=0)[:, None] * p - g.T @ u)
        return du, dp
    nu, np_, uhat, phat, cos = aux
    gc_row = (g * cos).sum(axis=1)
    gc_col = (g * cos).sum(axis=0)
    du = (gc_row[:, None] * uhat - g @ phat) / nu[:, None]
    dp = (gc_col[:, None] * phat - g.T @ uhat) / np_[:, None]
    return du, dp


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))


def _loss_and_grad_matrix(metric: str, variant: str, d: np.ndarray, col: np.ndarray):
    """Loss value and dL/dD for a distance matrix with query-label columns."""
    n_q = d.shape[0]
    rows = np.arange(n_q)
    if variant == "eq5":
        s = np.exp(-d[rows, col])
        loss = -float(s.mean())
        g = np.zeros_like(d)
        g[rows, col] = s / n_q
        return loss, g
    if variant == "softmax":
        logits = -d
        lse = _logsumexp(logits)
        loss = float((d[rows, col] + lse).mean())
        sigma = np.exp(logits - lse[:, None])
        g = -sigma / n_q
        g[rows, col] += 1.0 / n_q
        return loss, g
    raise ConfigError(f"unknown loss variant {variant!r}, want one of {LOSS_VARIANTS}")


def _prepare(params, support, query, metric):
    classes, counts, protos, _, cache_s = _prototype_matrix(params, support)
    if len(query) == 0:
        raise SamplingError("query sample set is empty")
    index_of = {int(c): i for i, c in enumerate(classes)}
    missing = sorted(set(query.labels.tolist()) - set(index_of))
    if missing:
        raise MissingPrototypeError(
            f"query labels {missing} have no prototype in the support set"
        )
    col = np.array([index_of[int(c)] for c in query.labels])
    latent_q, cache_q = forward_batch(params, query.features)
    d, aux = _pairwise(metric, latent_q, protos)
    return classes, counts, col, d, aux, cache_s, cache_q


def meta_loss(
    params: EncoderParams,
    support: PixelSampleSet,
    query: PixelSampleSet,
    metric: str = "sqeuclid",
    variant: str = "eq5",
) -> float:
    """Prototypical loss over the labeled query pixels."""
    _, _, col, d, _, _, _ = _prepare(params, support, query, metric)
    loss, _ = _loss_and_grad_matrix(metric, variant, d, col)
    return loss


def loss_gradient(
    params: EncoderParams,
    support: PixelSampleSet,
    query: PixelSampleSet,
    metric: str = "sqeuclid",
    variant: str = "eq5",
) -> EncoderParams:
    grads, _ = _loss_and_gradient(params, support, query, metric, variant)
    return grads


def _loss_and_gradient(params, support, query, metric, variant):
    classes, counts, col, d, aux, cache_s, cache_q = _prepare(
        params, support, query, metric
    )
    loss, g = _loss_and_grad_matrix(metric, variant, d, col)
    d_latent_q, d_protos = _pairwise_backward(metric, aux, g)
    # prototype c is the mean over its support pixels, so each support
    # pixel inherits its class gradient scaled by 1 / count
    class_index = {int(c): i for i, c in enumerate(classes)}
    idx = np.array([class_index[int(c)] for c in support.labels])
    d_latent_s = d_protos[idx] / counts[idx][:, None]
    grads = params.zeros_like()
    backward_batch(params, cache_q, d_latent_q, grads)
    backward_batch(params, cache_s, d_latent_s, grads)
    return grads, loss


class SGDMomentum:
    """Classical momentum; velocity buffers match the parameter shapes."""

    def __init__(self, learning_rate: float, momentum: float = 0.9):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: EncoderParams | None = None

    def step(self, params: EncoderParams, grads: EncoderParams) -> None:
        if self.velocity is None:
            self.velocity = params.zeros_like()
        for p, g, v in zip(params.arrays(), grads.arrays(), self.velocity.arrays()):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v


@dataclass(frozen=True)
class TrainConfig:
    ways: int = 1
    shots: int = 1
    n_query: int = 1
    episodes: int = 2000
    # attraction-only objective: larger rates collapse the latent space
    # well before 2000 episodes, see TrainReport loss traces
    learning_rate: float = 2e-4
    momentum: float = 0.9
    n_pix: int = 100
    metric: str = "sqeuclid"
    loss_variant: str = "eq5"
    hidden: tuple[int, int] = (128, 128)
    latent_dim: int = 64
    supervision: str = "weak"
    seed: int = 0
    pseudo: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)
    checkpoint_every: int = 500

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.n_pix < 1:
            raise ConfigError("n_pix must be >= 1")
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ConfigError(f"loss_variant must be one of {LOSS_VARIANTS}")
        if self.supervision not in ("weak", "full"):
            raise ConfigError("supervision must be 'weak' or 'full'")

    def echo(self) -> dict:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        return doc


@dataclass
class TrainReport:
    losses: list[float]
    wall_time: float
    params_checksum: str
    config: dict


def make_mask_provider(
    dataset: Dataset, supervision: str, pseudo: PseudoLabelConfig
) -> Callable[[object], np.ndarray]:
    """Masks for training inputs: pseudo in weak mode, ground truth in full.

    Pseudo masks depend only on the sample and the config, so they are
    computed once per sample and cached.
    """
    cache: dict[str, np.ndarray] = {}

    def provide(record) -> np.ndarray:
        got = cache.get(record.sample_id)
        if got is None:
            if supervision == "weak":
                got = generate_pseudo_mask(dataset, record, pseudo)
            else:
                got = dataset.load_gt_mask(record)
            cache[record.sample_id] = got
        return got

    return provide


def train_episode(
    params: EncoderParams,
    dataset: Dataset,
    episode: Episode,
    masks: Mapping[str, np.ndarray] | Callable[[object], np.ndarray],
    config: TrainConfig,
    optimizer: SGDMomentum,
    rng=None,
) -> float:
    """One optimizer step on the episode; returns the pre-step loss."""
    rng = np.random.default_rng(rng)
    mask_for = masks if callable(masks) else (lambda rec: masks[rec.sample_id])

    def pixel_sets(records):
        return concat_sample_sets([
            sample_pixels(dataset.load_features(rec), mask_for(rec), config.n_pix, rng)
            for rec in records
        ])

    support = pixel_sets(episode.support)
    query = pixel_sets(episode.query)
    grads, loss = _loss_and_gradient(
        params, support, query, config.metric, config.loss_variant
    )
    optimizer.step(params, grads)
    return loss


def meta_train(
    dataset: Dataset,
    config: TrainConfig,
    out: str | Path | None = None,
    side: str = "base",
    log: Callable[[str], None] | None = None,
) -> tuple[EncoderParams, TrainReport]:
    """Episodic meta-training loop over the chosen split side."""
    config.validate()
    t0 = time.monotonic()

    base_records = [
        r for r in dataset.samples if r.labels & dataset.split.side(side)
    ]
    if not base_records:
        raise SamplingError(f"no samples on split side {side!r}")
    input_dim = dataset.load_features(base_records[0]).shape[2]

    params = init_encoder(
        input_dim, config.hidden, config.latent_dim, seed=[config.seed, 0]
    )
    optimizer = SGDMomentum(config.learning_rate, config.momentum)
    mask_for = make_mask_provider(dataset, config.supervision, config.pseudo)

    losses: list[float] = []
    for i in range(config.episodes):
        episode = sample_episode(
            dataset.samples, dataset.split, side,
            config.ways, config.shots, config.n_query, seed=[config.seed, 1, i],
        )
        loss = train_episode(
            params, dataset, episode, mask_for, config, optimizer,
            rng=[config.seed, 2, i],
        )
        losses.append(loss)
        if log and (i + 1) % 200 == 0:
            recent = float(np.mean(losses[-200:]))
            log(f"episode {i + 1}/{config.episodes}  loss(last 200) {recent:.5f}")
        if out and config.checkpoint_every and (i + 1) % config.checkpoint_every == 0:
            save_checkpoint(params, out, config.echo())

    report = TrainReport(
        losses=losses,
        wall_time=time.monotonic() - t0,
        params_checksum=params_checksum(params),
        config=config.echo(),
    )
    if out:
        save_checkpoint(params, out, config.echo())
    return params, report

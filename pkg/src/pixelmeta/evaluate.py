"""Mean-IoU metric and the multi-run episodic evaluation protocol.

Counts accumulate across all episodes of a run (one accumulator per run);
per-episode averaging exists behind a flag for sensitivity analysis.
Query-side scoring always uses ground truth, also in weak mode, where only
the support masks stay pseudo.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .data import BACKGROUND, IGNORE_LABEL, Dataset, sample_episode
from .encoder import EncoderParams
from .errors import MetricError, ShapeError
from .inference import build_support_index, segment_query
from .metalearn import make_mask_provider
from .pseudolabel import PseudoLabelConfig


class IoUAccumulator:
    """Per-class intersection and union pixel counts."""

    def __init__(self):
        self.intersection: dict[int, int] = {}
        self.union: dict[int, int] = {}

    def update(self, predicted: np.ndarray, truth: np.ndarray,
               roster: Iterable[int]) -> "IoUAccumulator":
        if predicted.shape != truth.shape:
            raise ShapeError(f"predicted {predicted.shape} vs truth {truth.shape}")
        valid = truth != IGNORE_LABEL
        for c in set(int(r) for r in roster) | {BACKGROUND}:
            pred_c = (predicted == c) & valid
            true_c = (truth == c) & valid
            self.intersection[c] = self.intersection.get(c, 0) + int(
                (pred_c & true_c).sum()
            )
            self.union[c] = self.union.get(c, 0) + int((pred_c | true_c).sum())
        return self

    def merge(self, other: "IoUAccumulator") -> "IoUAccumulator":
        for c in other.union:
            self.intersection[c] = self.intersection.get(c, 0) + other.intersection[c]
            self.union[c] = self.union.get(c, 0) + other.union[c]
        return self

    def iou_table(self) -> dict[int, float]:
        return {
            c: self.intersection[c] / self.union[c]
            for c in sorted(self.union)
            if self.union[c] > 0
        }


def update_accumulator(acc: IoUAccumulator, predicted: np.ndarray,
                       truth: np.ndarray, roster: Iterable[int]) -> IoUAccumulator:
    return acc.update(predicted, truth, roster)


def mean_iou(acc: IoUAccumulator) -> float:
    """Mean over classes with nonzero union, background included as a class."""
    table = acc.iou_table()
    if not table:
        raise MetricError("mean-IoU undefined: no class has nonzero union")
    return float(np.mean(list(table.values())))


@dataclass(frozen=True)
class EvalConfig:
    ways: int = 1
    shots: int = 1
    n_query: int = 1
    runs: int = 5
    episodes_per_run: int = 1000
    knn: int = 1
    n_pix: int = 100
    metric: str = "sqeuclid"
    supervision: str = "weak"
    side: str = "novel"
    episode_average: bool = False
    seed: int = 0
    pseudo: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)


@dataclass
class RunReport:
    run_mean_iou: list[float]
    run_class_iou: list[dict[int, float]]
    mean: float
    std: float
    run_seeds: list[int]
    config: dict

    def to_json(self) -> dict:
        return {
            "run_mean_iou": self.run_mean_iou,
            "run_class_iou": [
                {str(c): v for c, v in table.items()} for table in self.run_class_iou
            ],
            "mean": self.mean,
            "std": self.std,
            "run_seeds": self.run_seeds,
            "config": self.config,
        }


def _config_echo(cfg: EvalConfig, use_encoder: bool) -> dict:
    doc = {
        "ways": cfg.ways, "shots": cfg.shots, "n_query": cfg.n_query,
        "runs": cfg.runs, "episodes_per_run": cfg.episodes_per_run,
        "knn": cfg.knn, "n_pix": cfg.n_pix, "metric": cfg.metric,
        "supervision": cfg.supervision, "side": cfg.side,
        "episode_average": cfg.episode_average, "seed": cfg.seed,
        "use_encoder": use_encoder,
        "pseudo": {
            "saliency_threshold": cfg.pseudo.saliency_threshold,
            "mask_threshold": cfg.pseudo.mask_threshold,
            "use_saliency": cfg.pseudo.use_saliency,
            "weight_epsilon": cfg.pseudo.weight_epsilon,
        },
    }
    return doc


def run_protocol(
    dataset: Dataset,
    params: EncoderParams | None,
    config: EvalConfig,
) -> RunReport:
    """Evaluate over `runs` independent runs of sampled episodes.

    Support masks come from the supervision mode; query predictions are
    always scored against ground truth.
    """
    mask_for = make_mask_provider(dataset, config.supervision, config.pseudo)
    master = np.random.default_rng(config.seed)
    run_seeds = [int(s) for s in master.integers(0, 2**31 - 1, size=config.runs)]

    run_means: list[float] = []
    run_tables: list[dict[int, float]] = []
    for run_seed in run_seeds:
        acc = IoUAccumulator()
        episode_scores: list[float] = []
        for e in range(config.episodes_per_run):
            episode = sample_episode(
                dataset.samples, dataset.split, config.side,
                config.ways, config.shots, config.n_query,
                seed=[run_seed, 0, e],
            )
            index = build_support_index(
                params, dataset, episode.support, mask_for,
                n_pix=config.n_pix, seed=[run_seed, 1, e], metric=config.metric,
            )
            ep_acc = IoUAccumulator() if config.episode_average else acc
            for rec in episode.query:
                predicted = segment_query(
                    params, index, dataset.load_features(rec), k=config.knn
                )
                ep_acc.update(predicted, dataset.load_gt_mask(rec),
                              episode.class_roster)
            if config.episode_average:
                episode_scores.append(mean_iou(ep_acc))
        if config.episode_average:
            run_means.append(float(np.mean(episode_scores)))
            run_tables.append({})
        else:
            run_means.append(mean_iou(acc))
            run_tables.append(acc.iou_table())

    return RunReport(
        run_mean_iou=run_means,
        run_class_iou=run_tables,
        mean=float(np.mean(run_means)),
        std=float(np.std(run_means)),
        run_seeds=run_seeds,
        config=_config_echo(config, params is not None),
    )

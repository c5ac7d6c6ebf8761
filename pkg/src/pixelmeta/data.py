"""On-disk data model: manifests, sample records, splits, episode sampling.

A dataset is one JSON manifest plus tensor files (see tensorio). Loaded
datasets are immutable; the only mutable state is an access log used to
audit which samples a training run touched.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericError, SamplingError, ValidationError
from .tensorio import load_tensor

IGNORE_LABEL = 65535
BACKGROUND = 0


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    labels: frozenset[int]
    feature_path: Path
    heatmap_path: Path
    saliency_path: Path
    gt_mask_path: Path | None = None


@dataclass(frozen=True)
class SplitSpec:
    base_classes: frozenset[int]
    novel_classes: frozenset[int]

    def __post_init__(self):
        overlap = self.base_classes & self.novel_classes
        if overlap:
            raise ValidationError(
                f"split overlap: {', '.join(str(c) for c in sorted(overlap))}"
            )

    def side(self, name: str) -> frozenset[int]:
        if name == "base":
            return self.base_classes
        if name == "novel":
            return self.novel_classes
        raise ValidationError(f"unknown split side {name!r}, want 'base' or 'novel'")


class EmbeddingTable:
    """Word-embedding vectors for every segmentation and CAM class."""

    def __init__(self, vectors: dict[int, np.ndarray], names: dict[int, str]):
        if not vectors:
            raise ValidationError("embedding table is empty")
        dims = {v.shape[0] for v in vectors.values()}
        if len(dims) != 1:
            raise ValidationError(f"embedding rows disagree on dimension: {sorted(dims)}")
        self.dim = dims.pop()
        self._by_id = {cid: np.asarray(v, dtype=np.float64) for cid, v in vectors.items()}
        self.names = dict(names)
        for cid, vec in self._by_id.items():
            if not np.all(np.isfinite(vec)):
                raise NumericError(f"embedding for class {cid} has non-finite values")
            if np.linalg.norm(vec) == 0.0:
                raise NumericError(f"embedding for class {cid} has zero norm")

    @property
    def entries(self) -> dict[str, np.ndarray]:
        return {self.names[cid]: vec for cid, vec in self._by_id.items()}

    def vector(self, class_id: int) -> np.ndarray:
        try:
            return self._by_id[class_id]
        except KeyError:
            raise ValidationError(f"no embedding for class id {class_id}") from None

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._by_id


@dataclass(frozen=True)
class Episode:
    ways: int
    shots: int
    n_query: int
    support: tuple[SampleRecord, ...]
    query: tuple[SampleRecord, ...]
    class_roster: tuple[int, ...]


class Dataset:
    """A loaded manifest: class tables, records, split, embeddings.

    Tensor loads go through this class so they can be validated, cached,
    and logged. Safe for concurrent reads after construction.
    """

    def __init__(
        self,
        root: Path,
        classes: "OrderedDict[int, str]",
        cam_classes: "OrderedDict[int, str]",
        split: SplitSpec,
        samples: list[SampleRecord],
        embeddings: EmbeddingTable,
        cache_size: int = 1024,
    ):
        self.root = root
        self.classes = classes
        self.cam_classes = cam_classes
        self.cam_class_ids = list(cam_classes)
        self.split = split
        self.samples = list(samples)
        self.embeddings = embeddings
        self.access_log: set[str] = set()
        self._cache: "OrderedDict[Path, np.ndarray]" = OrderedDict()
        self._cache_size = cache_size

    def _load(self, path: Path, sample_id: str) -> np.ndarray:
        self.access_log.add(sample_id)
        cached = self._cache.get(path)
        if cached is not None:
            self._cache.move_to_end(path)
            return cached
        arr = load_tensor(path)
        arr.setflags(write=False)
        self._cache[path] = arr
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return arr

    def load_features(self, record: SampleRecord) -> np.ndarray:
        arr = self._load(record.feature_path, record.sample_id)
        if arr.ndim != 3:
            raise ValidationError(
                f"{record.sample_id}: feature map must be H x W x d, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{record.sample_id}: feature map has non-finite values")
        return arr

    def load_heatmaps(self, record: SampleRecord) -> np.ndarray:
        arr = self._load(record.heatmap_path, record.sample_id)
        if arr.ndim != 3:
            raise ValidationError(
                f"{record.sample_id}: heatmap stack must be N_CAM x H x W, got shape {arr.shape}"
            )
        if arr.shape[0] != len(self.cam_class_ids):
            raise ValidationError(
                f"{record.sample_id}: heatmap stack has {arr.shape[0]} maps, "
                f"manifest declares {len(self.cam_class_ids)} CAM classes"
            )
        # heatmap invariant is [0, 1]; clamp on load
        return np.clip(arr, 0.0, 1.0)

    def load_saliency(self, record: SampleRecord) -> np.ndarray:
        arr = self._load(record.saliency_path, record.sample_id)
        if arr.ndim != 2:
            raise ValidationError(
                f"{record.sample_id}: saliency map must be H x W, got shape {arr.shape}"
            )
        return np.clip(arr, 0.0, 1.0)

    def load_gt_mask(self, record: SampleRecord) -> np.ndarray:
        if record.gt_mask_path is None:
            raise ValidationError(f"{record.sample_id}: no ground-truth mask in manifest")
        arr = self._load(record.gt_mask_path, record.sample_id)
        if arr.ndim != 2 or arr.dtype != np.uint16:
            raise ValidationError(
                f"{record.sample_id}: mask must be a u16 H x W tensor, got "
                f"{arr.dtype} {arr.shape}"
            )
        present = set(np.unique(arr).tolist()) - {BACKGROUND, IGNORE_LABEL}
        unknown = present - set(self.classes)
        if unknown:
            raise ValidationError(
                f"{record.sample_id}: mask labels {sorted(unknown)} not in manifest class table"
            )
        return arr

    def sample_episode(self, side: str, ways: int, shots: int, n_query: int = 1,
                       seed=None) -> Episode:
        return sample_episode(self.samples, self.split, side, ways, shots, n_query, seed)


def _parse_class_table(obj, what: str) -> "OrderedDict[int, str]":
    if not isinstance(obj, dict):
        raise ValidationError(f"{what} must be an object mapping id to name")
    table: "OrderedDict[int, str]" = OrderedDict()
    for key, name in obj.items():
        try:
            cid = int(key)
        except ValueError:
            raise ValidationError(f"{what}: non-integer class id {key!r}") from None
        if cid in (BACKGROUND, IGNORE_LABEL):
            raise ValidationError(f"{what}: id {cid} is reserved")
        if cid in table:
            raise ValidationError(f"{what}: duplicate class id {cid}")
        table[cid] = str(name)
    return table


def load_manifest(path: str | Path, cache_size: int = 1024) -> Dataset:
    """Load and fully validate a dataset manifest.

    Unknown top-level keys are ignored so exporters may attach provenance.
    """
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    root = path.parent

    for key in ("classes", "cam_classes", "embedding_path", "splits", "samples"):
        if key not in doc:
            raise ValidationError(f"manifest missing required key {key!r}")

    classes = _parse_class_table(doc["classes"], "classes")
    cam_classes = _parse_class_table(doc["cam_classes"], "cam_classes")
    leak = set(classes) & set(cam_classes)
    if leak:
        raise ValidationError(
            f"CAM class ids overlap segmentation class ids: {sorted(leak)}"
        )

    splits = doc["splits"]
    for side in ("base", "novel"):
        if side not in splits:
            raise ValidationError(f"splits missing side {side!r}")
        unknown = set(splits[side]) - set(classes)
        if unknown:
            raise ValidationError(
                f"split {side!r} lists unknown class ids {sorted(unknown)}"
            )
    split = SplitSpec(frozenset(splits["base"]), frozenset(splits["novel"]))

    records = []
    seen_ids: set[str] = set()
    for entry in doc["samples"]:
        sid = entry["id"]
        if sid in seen_ids:
            raise ValidationError(f"duplicate sample id {sid!r}")
        seen_ids.add(sid)
        labels = frozenset(int(c) for c in entry["labels"])
        if not labels:
            raise ValidationError(f"sample {sid!r} has an empty label set")
        unknown = labels - set(classes)
        if unknown:
            raise ValidationError(
                f"sample {sid!r} labeled with unknown class ids {sorted(unknown)}"
            )
        paths = {}
        for key in ("features", "heatmaps", "saliency"):
            p = root / entry[key]
            if not p.exists():
                raise ValidationError(f"sample {sid!r}: missing file {p}")
            paths[key] = p
        gt = None
        if entry.get("gt_mask"):
            gt = root / entry["gt_mask"]
            if not gt.exists():
                raise ValidationError(f"sample {sid!r}: missing file {gt}")
        records.append(
            SampleRecord(sid, labels, paths["features"], paths["heatmaps"],
                         paths["saliency"], gt)
        )

    embed_path = root / doc["embedding_path"]
    if not embed_path.exists():
        raise ValidationError(f"missing embedding file {embed_path}")
    matrix = load_tensor(embed_path)
    if matrix.ndim != 2:
        raise ValidationError(f"embedding table must be 2-D, got shape {matrix.shape}")
    # row order: segmentation classes in manifest order, then CAM classes
    row_ids = list(classes) + list(cam_classes)
    if matrix.shape[0] != len(row_ids):
        raise ValidationError(
            f"embedding table has {matrix.shape[0]} rows, manifest declares "
            f"{len(row_ids)} classes"
        )
    names = dict(classes)
    names.update(cam_classes)
    embeddings = EmbeddingTable(
        {cid: matrix[i] for i, cid in enumerate(row_ids)}, names
    )

    return Dataset(root, classes, cam_classes, split, records, embeddings,
                   cache_size=cache_size)


def sample_episode(
    records: Sequence[SampleRecord],
    split: SplitSpec,
    side: str,
    ways: int,
    shots: int,
    n_query: int = 1,
    seed=None,
) -> Episode:
    """Draw one N-way K-shot episode from the given split side.

    A sample is eligible for roster class c iff c is in its label set.
    Sampling is without replacement within the episode; deterministic for
    a fixed seed.
    """
    if ways < 1 or shots < 1 or n_query < 1:
        raise SamplingError("ways, shots and n_query must all be >= 1")
    rng = np.random.default_rng(seed)
    side_classes = split.side(side)
    other = split.side("novel" if side == "base" else "base")

    # samples touching the other side are off limits entirely (split hygiene)
    usable = [r for r in records if not (r.labels & other)]
    by_class: dict[int, list[SampleRecord]] = {c: [] for c in sorted(side_classes)}
    for rec in usable:
        for c in rec.labels & side_classes:
            by_class[c].append(rec)
    for pool in by_class.values():
        pool.sort(key=lambda r: r.sample_id)

    eligible = [c for c, pool in by_class.items() if len(pool) >= shots + n_query]
    if len(eligible) < ways:
        short = [c for c, pool in by_class.items() if len(pool) < shots + n_query]
        raise SamplingError(
            f"need {ways} classes with >= {shots + n_query} samples on side "
            f"{side!r}, have {len(eligible)}; short classes: {short}"
        )
    roster = tuple(int(c) for c in rng.choice(eligible, size=ways, replace=False))

    support: list[SampleRecord] = []
    taken: set[str] = set()
    for c in roster:
        pool = [r for r in by_class[c] if r.sample_id not in taken]
        if len(pool) < shots:
            raise SamplingError(
                f"class {c}: only {len(pool)} unused samples for {shots} shots"
            )
        picked = rng.choice(len(pool), size=shots, replace=False)
        for i in sorted(int(j) for j in picked):
            support.append(pool[i])
            taken.add(pool[i].sample_id)

    roster_set = set(roster)
    query_pool = sorted(
        (r for r in usable if r.labels & roster_set and r.sample_id not in taken),
        key=lambda r: r.sample_id,
    )
    if len(query_pool) < n_query:
        raise SamplingError(
            f"only {len(query_pool)} query candidates for roster {sorted(roster_set)}, "
            f"need {n_query}"
        )
    picked = rng.choice(len(query_pool), size=n_query, replace=False)
    query = tuple(query_pool[int(i)] for i in sorted(int(j) for j in picked))

    return Episode(ways, shots, n_query, tuple(support), query, roster)

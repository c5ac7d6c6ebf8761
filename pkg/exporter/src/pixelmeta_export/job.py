"""Batch export: images + image-level labels -> interchange dataset.

Stateless and deterministic: every run re-derives everything from the job
description; model checkpoint hashes and the full job config land in the
manifest's provenance block so downstream reports are traceable to exact
backbones.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .embeddings import embed_names
from .errors import ConfigError, SchemaError
from .models import (
    ModelBundle,
    cam_heatmaps,
    feature_map,
    load_torchscript,
    saliency_map,
)
from .resize import resize_nearest
from .tensor_writer import write_tensor

CAM_ID_OFFSET = 1000
IGNORE_LABEL = 65535


@dataclass
class ImageEntry:
    image_id: str
    image_path: Path
    labels: list[str]
    gt_mask_path: Path | None = None


@dataclass
class ExportJob:
    images: list[ImageEntry]
    class_names: list[str]  # segmentation classes, id = position + 1
    cam_class_names: list[str]  # CAM model output channels, in order
    base_classes: list[str]
    novel_classes: list[str]
    out_dir: Path
    size: int = 129
    cam_ckpt: Path | None = None
    feat_ckpt: Path | None = None
    sal_ckpt: Path | None = None
    embed_path: Path | None = None
    sal_activation: str = "sigmoid"
    void_value: int = 255
    cam_excluded: list[str] = field(default_factory=list)

    def class_id(self, name: str) -> int:
        try:
            return self.class_names.index(name) + 1
        except ValueError:
            raise ConfigError(f"unknown class name {name!r}") from None


def read_image_list(images_file: str | Path, labels_csv: str | Path) -> list[ImageEntry]:
    """images file: CSV rows `id,path`; labels: `id,name;name[,gt_mask_path]`."""
    paths = {}
    root = Path(images_file).parent
    with open(images_file, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ConfigError(f"image list row needs `id,path`: {row}")
            paths[row[0].strip()] = (root / row[1].strip()).resolve()
    entries = []
    lroot = Path(labels_csv).parent
    with open(labels_csv, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#"):
                continue
            if len(row) < 2:
                raise ConfigError(f"labels row needs `id,labels[,gt_mask]`: {row}")
            image_id = row[0].strip()
            if image_id not in paths:
                raise ConfigError(f"labels reference unknown image id {image_id!r}")
            labels = [t.strip() for t in row[1].split(";") if t.strip()]
            if not labels:
                raise ConfigError(f"image {image_id!r} has no labels")
            gt = (lroot / row[2].strip()).resolve() if len(row) > 2 and row[2].strip() \
                else None
            entries.append(ImageEntry(image_id, paths[image_id], labels, gt))
    if not entries:
        raise ConfigError("no labeled images to export")
    return entries


def load_image(path: Path, size: int) -> np.ndarray:
    """Decode to RGB, resize to the common grid, scale to [0, 1], CHW."""
    if not path.exists():
        raise ConfigError(f"image not found: {path}")
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    return (np.asarray(rgb, dtype=np.float32) / 255.0).transpose(2, 0, 1)


def load_gt_mask(path: Path, size: int, class_count: int, void_value: int) -> np.ndarray:
    """Palette/gray mask -> u16 label field on the common grid.

    Pixel values are class ids directly; `void_value` becomes the ignore
    label. Nearest-neighbor resize keeps the label set intact.
    """
    if not path.exists():
        raise ConfigError(f"ground-truth mask not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("P") if img.mode == "P" else img.convert("L"))
    arr = resize_nearest(arr, size, size).astype(np.uint16)
    out = arr.copy()
    out[arr == void_value] = IGNORE_LABEL
    bad = set(np.unique(out).tolist()) - set(range(class_count + 1)) - {IGNORE_LABEL}
    if bad:
        raise ConfigError(f"{path}: mask values {sorted(bad)} exceed the class table")
    return out


def export_heatmaps(bundle: ModelBundle, job: ExportJob, entry: ImageEntry,
                    image: np.ndarray) -> str:
    rel = f"tensors/{entry.image_id}_cam.pxt"
    maps = cam_heatmaps(bundle, image, len(job.cam_class_names), job.size)
    write_tensor(maps, job.out_dir / rel)
    return rel


def export_features(bundle: ModelBundle, job: ExportJob, entry: ImageEntry,
                    image: np.ndarray) -> str:
    rel = f"tensors/{entry.image_id}_feat.pxt"
    write_tensor(feature_map(bundle, image, job.size), job.out_dir / rel)
    return rel


def export_saliency(bundle: ModelBundle, job: ExportJob, entry: ImageEntry,
                    image: np.ndarray) -> str:
    rel = f"tensors/{entry.image_id}_sal.pxt"
    write_tensor(saliency_map(bundle, image, job.size, job.sal_activation),
                 job.out_dir / rel)
    return rel


def export_embeddings(job: ExportJob) -> str:
    if job.embed_path is None:
        raise ConfigError("no word-vector file configured (--embed)")
    names = job.class_names + job.cam_class_names
    matrix = embed_names(names, job.embed_path)
    rel = "embeddings.pxt"
    write_tensor(matrix.astype(np.float32), job.out_dir / rel)
    return rel


def write_manifest(job: ExportJob, records: list[dict], embedding_rel: str,
                   provenance: dict) -> Path:
    """Validate and write the manifest; refuses to describe missing files."""
    seg_ids = {name: i + 1 for i, name in enumerate(job.class_names)}
    overlap = {n.lower() for n in job.class_names} & \
        {n.lower() for n in job.cam_class_names}
    if overlap:
        raise SchemaError(
            f"CAM classes leak segmentation classes: {sorted(overlap)}"
        )
    base = [seg_ids[n] for n in job.base_classes]
    novel = [seg_ids[n] for n in job.novel_classes]
    if set(base) & set(novel):
        raise SchemaError("base and novel splits overlap")
    if set(base) | set(novel) != set(seg_ids.values()):
        raise SchemaError("splits must cover every class exactly once")
    for rec in records:
        for key in ("features", "heatmaps", "saliency", "gt_mask"):
            rel = rec.get(key)
            if rel and not (job.out_dir / rel).exists():
                raise SchemaError(f"manifest would reference missing file {rel}")
    if not (job.out_dir / embedding_rel).exists():
        raise SchemaError(f"manifest would reference missing file {embedding_rel}")

    doc = {
        "classes": {str(i + 1): n for i, n in enumerate(job.class_names)},
        "cam_classes": {
            str(CAM_ID_OFFSET + k + 1): n
            for k, n in enumerate(job.cam_class_names)
        },
        "embedding_path": embedding_rel,
        "splits": {"base": base, "novel": novel},
        "samples": records,
        "provenance": provenance,
    }
    path = job.out_dir / "manifest.json"
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        json.dump(doc, f, indent=2)
    os.replace(tmp, path)
    return path


def export_dataset(job: ExportJob) -> Path:
    """Run the whole job; returns the manifest path."""
    if len(set(job.class_names)) != len(job.class_names):
        raise ConfigError("duplicate segmentation class names")
    if len(set(job.cam_class_names)) != len(job.cam_class_names):
        raise ConfigError("duplicate CAM class names")
    (job.out_dir / "tensors").mkdir(parents=True, exist_ok=True)

    cam = load_torchscript(job.cam_ckpt, "CAM") if job.cam_ckpt else None
    feat = load_torchscript(job.feat_ckpt, "feature") if job.feat_ckpt else None
    sal = load_torchscript(job.sal_ckpt, "saliency") if job.sal_ckpt else None
    for what, bundle in (("--cam-ckpt", cam), ("--feat-ckpt", feat),
                         ("--sal-ckpt", sal)):
        if bundle is None:
            raise ConfigError(f"missing required checkpoint option {what}")

    records = []
    for entry in job.images:
        for name in entry.labels:
            job.class_id(name)  # fail fast on unknown names
        image = load_image(entry.image_path, job.size)
        rec = {
            "id": entry.image_id,
            "labels": sorted(job.class_id(n) for n in entry.labels),
            "features": export_features(feat, job, entry, image),
            "heatmaps": export_heatmaps(cam, job, entry, image),
            "saliency": export_saliency(sal, job, entry, image),
        }
        if entry.gt_mask_path is not None:
            mask = load_gt_mask(entry.gt_mask_path, job.size,
                                len(job.class_names), job.void_value)
            rel = f"tensors/{entry.image_id}_gt.pxt"
            write_tensor(mask, job.out_dir / rel)
            rec["gt_mask"] = rel
        records.append(rec)

    embedding_rel = export_embeddings(job)
    provenance = {
        "tool": f"pixelmeta-export {__version__}",
        "size": job.size,
        "sal_activation": job.sal_activation,
        "void_value": job.void_value,
        "cam_checkpoint": {"path": str(cam.path), "sha256": cam.sha256},
        "feature_checkpoint": {"path": str(feat.path), "sha256": feat.sha256},
        "saliency_checkpoint": {"path": str(sal.path), "sha256": sal.sha256},
        "embedding_source": str(job.embed_path),
        "cam_excluded_classes": sorted(job.cam_excluded),
    }
    return write_manifest(job, records, embedding_rel, provenance)

import json
from pathlib import Path

import numpy as np
import pytest
from pixelmeta.data import IGNORE_LABEL, load_manifest
from pixelmeta.pseudolabel import PseudoLabelConfig, generate_pseudo_mask
from pixelmeta.tensorio import load_tensor

from pixelmeta_export.errors import ConfigError, SchemaError
from pixelmeta_export.job import ExportJob, export_dataset, read_image_list

from conftest import CAM_NAMES, CLASS_NAMES


def make_job(corpus, checkpoints, vec_file, out, **overrides):
    kw = dict(
        images=read_image_list(corpus["images_csv"], corpus["labels_csv"]),
        class_names=list(CLASS_NAMES),
        cam_class_names=list(CAM_NAMES),
        base_classes=["cat", "dog"],
        novel_classes=["potted plant"],
        out_dir=Path(out),
        size=33,
        cam_ckpt=checkpoints["cam"],
        feat_ckpt=checkpoints["feat"],
        sal_ckpt=checkpoints["sal"],
        embed_path=vec_file,
    )
    kw.update(overrides)
    return ExportJob(**kw)


@pytest.fixture(scope="module")
def exported(image_corpus, checkpoints, vec_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("exported")
    job = make_job(image_corpus, checkpoints, vec_file, out)
    manifest = export_dataset(job)
    return out, manifest


def test_manifest_loads_in_primary_with_zero_errors(exported):
    _, manifest = exported
    ds = load_manifest(manifest)
    assert len(ds.samples) == 6
    assert ds.classes == {1: "cat", 2: "dog", 3: "potted plant"}
    assert list(ds.cam_classes.values()) == CAM_NAMES
    assert ds.split.novel_classes == frozenset({3})


def test_every_tensor_round_trips_with_declared_shape_dtype(exported):
    _, manifest = exported
    ds = load_manifest(manifest)
    for rec in ds.samples:
        feats = load_tensor(rec.feature_path)
        assert feats.shape == (33, 33, 6) and feats.dtype == np.float32
        cams = load_tensor(rec.heatmap_path)
        assert cams.shape == (4, 33, 33) and cams.dtype == np.float32
        assert cams.min() >= 0.0 and cams.max() <= 1.0
        sal = load_tensor(rec.saliency_path)
        assert sal.shape == (33, 33) and sal.dtype == np.float32
        mask = load_tensor(rec.gt_mask_path)
        assert mask.shape == (33, 33) and mask.dtype == np.uint16


def test_void_pixels_map_to_ignore_label(exported):
    _, manifest = exported
    ds = load_manifest(manifest)
    mask = ds.load_gt_mask(ds.samples[0])
    assert (mask == IGNORE_LABEL).any()  # the void strip survives resizing
    assert 255 not in np.unique(mask)


def test_primary_pipeline_consumes_export(exported):
    _, manifest = exported
    ds = load_manifest(manifest)
    pm = generate_pseudo_mask(ds, ds.samples[0], PseudoLabelConfig())
    assert pm.shape == (33, 33)
    episode = ds.sample_episode("base", ways=1, shots=1, n_query=1, seed=0)
    assert episode.class_roster


def test_provenance_records_hashes_and_config(exported):
    out, manifest = exported
    doc = json.loads(Path(manifest).read_text())
    prov = doc["provenance"]
    assert len(prov["cam_checkpoint"]["sha256"]) == 64
    assert len(prov["feature_checkpoint"]["sha256"]) == 64
    assert prov["size"] == 33
    assert prov["sal_activation"] == "sigmoid"


def test_labels_recorded_as_ids(exported):
    _, manifest = exported
    doc = json.loads(Path(manifest).read_text())
    by_id = {s["id"]: s["labels"] for s in doc["samples"]}
    assert by_id["img1"] == [2, 3]


def test_missing_checkpoint_is_config_error(image_corpus, checkpoints, vec_file,
                                            tmp_path):
    job = make_job(image_corpus, checkpoints, vec_file, tmp_path,
                   cam_ckpt=tmp_path / "missing.pt")
    with pytest.raises(ConfigError, match="missing.pt"):
        export_dataset(job)
    job = make_job(image_corpus, checkpoints, vec_file, tmp_path, sal_ckpt=None)
    with pytest.raises(ConfigError, match="--sal-ckpt"):
        export_dataset(job)


def test_cam_name_leak_refused(image_corpus, checkpoints, vec_file, tmp_path):
    job = make_job(image_corpus, checkpoints, vec_file, tmp_path,
                   cam_class_names=["zebra", "lion", "tiger", "CAT"])
    with pytest.raises(SchemaError, match="leak"):
        export_dataset(job)


def test_split_must_cover_classes(image_corpus, checkpoints, vec_file, tmp_path):
    job = make_job(image_corpus, checkpoints, vec_file, tmp_path,
                   novel_classes=[])
    with pytest.raises(SchemaError, match="cover"):
        export_dataset(job)
    job = make_job(image_corpus, checkpoints, vec_file, tmp_path,
                   base_classes=["cat", "dog", "potted plant"],
                   novel_classes=["potted plant"])
    with pytest.raises(SchemaError, match="overlap"):
        export_dataset(job)


def test_unknown_label_name_rejected(image_corpus, checkpoints, vec_file,
                                     tmp_path):
    job = make_job(image_corpus, checkpoints, vec_file, tmp_path,
                   class_names=["cat", "dog", "sofa"],
                   base_classes=["cat", "dog"], novel_classes=["sofa"])
    with pytest.raises(ConfigError, match="potted plant"):
        export_dataset(job)


def test_export_is_deterministic(image_corpus, checkpoints, vec_file, tmp_path):
    a = export_dataset(make_job(image_corpus, checkpoints, vec_file,
                                tmp_path / "a"))
    b = export_dataset(make_job(image_corpus, checkpoints, vec_file,
                                tmp_path / "b"))
    ds_a, ds_b = load_manifest(a), load_manifest(b)
    for ra, rb in zip(ds_a.samples, ds_b.samples):
        assert load_tensor(ra.feature_path).tobytes() == \
            load_tensor(rb.feature_path).tobytes()
        assert load_tensor(ra.heatmap_path).tobytes() == \
            load_tensor(rb.heatmap_path).tobytes()

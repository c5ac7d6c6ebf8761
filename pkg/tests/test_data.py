import numpy as np
import pytest

from pixelmeta.data import load_manifest, sample_episode
from pixelmeta.errors import SamplingError, ValidationError

from conftest import write_tiny_dataset


def test_manifest_happy_path(tmp_path):
    path = write_tiny_dataset(tmp_path)
    ds = load_manifest(path)
    assert ds.classes == {1: "class_1", 2: "class_2", 3: "class_3"}
    assert ds.cam_class_ids == [101, 102]
    assert len(ds.samples) == 6
    assert ds.split.base_classes == frozenset({1, 2})
    assert ds.embeddings.dim == 4
    for cid in (1, 2, 3, 101, 102):
        assert cid in ds.embeddings


def test_split_overlap_rejected(tmp_path):
    def overlap(doc):
        doc["splits"]["base"].append(3)
    path = write_tiny_dataset(tmp_path, mutate=overlap)
    with pytest.raises(ValidationError, match="split overlap: 3"):
        load_manifest(path)


def test_unknown_class_in_sample_rejected(tmp_path):
    def bad_label(doc):
        doc["samples"][0]["labels"] = [9]
    path = write_tiny_dataset(tmp_path, mutate=bad_label)
    with pytest.raises(ValidationError, match="unknown class ids \\[9\\]"):
        load_manifest(path)


def test_missing_file_names_path(tmp_path):
    def dangle(doc):
        doc["samples"][0]["features"] = "tensors/gone.pxt"
    path = write_tiny_dataset(tmp_path, mutate=dangle)
    with pytest.raises(ValidationError, match="gone.pxt"):
        load_manifest(path)


def test_cam_ids_must_not_leak_into_classes(tmp_path):
    def leak(doc):
        doc["cam_classes"]["2"] = "leaky"
    path = write_tiny_dataset(tmp_path, mutate=leak)
    with pytest.raises(ValidationError, match="overlap"):
        load_manifest(path)


def test_embedding_row_count_checked(tmp_path):
    def drop_cam(doc):
        del doc["cam_classes"]["102"]
    path = write_tiny_dataset(tmp_path, mutate=drop_cam)
    with pytest.raises(ValidationError, match="rows"):
        load_manifest(path)


def test_unknown_manifest_keys_ignored(tmp_path):
    def extra(doc):
        doc["provenance"] = {"tool": "x"}
    path = write_tiny_dataset(tmp_path, mutate=extra)
    load_manifest(path)


def test_heatmap_values_clamped_on_load(tmp_path, dataset):
    rec = dataset.samples[0]
    maps = dataset.load_heatmaps(rec)
    assert maps.min() >= 0.0 and maps.max() <= 1.0


def test_episode_sizes_and_disjointness(dataset):
    ep = dataset.sample_episode("base", ways=2, shots=3, n_query=2, seed=4)
    assert len(ep.support) == 6 and len(ep.query) == 2
    assert len(ep.class_roster) == 2
    for c in ep.class_roster:
        assert sum(c in r.labels for r in ep.support) >= 3
        assert c in dataset.split.base_classes
    support_ids = {r.sample_id for r in ep.support}
    assert len(support_ids) == 6
    assert all(r.sample_id not in support_ids for r in ep.query)
    assert all(r.labels & set(ep.class_roster) for r in ep.query)


def test_two_way_three_shot_layout(dataset):
    ep = dataset.sample_episode("base", ways=2, shots=3, n_query=1, seed=0)
    per_class = {c: sum(c in r.labels for r in ep.support) for c in ep.class_roster}
    assert all(v == 3 for v in per_class.values())


def test_episode_determinism(dataset):
    a = dataset.sample_episode("novel", 1, 1, 1, seed=12)
    b = dataset.sample_episode("novel", 1, 1, 1, seed=12)
    assert a == b
    cs = {dataset.sample_episode("novel", 1, 1, 1, seed=s).support[0].sample_id
          for s in range(20)}
    assert len(cs) > 1


def test_base_episodes_never_touch_novel(dataset):
    novel = dataset.split.novel_classes
    for s in range(10):
        ep = dataset.sample_episode("base", 2, 2, 2, seed=s)
        assert not set(ep.class_roster) & novel
        for rec in list(ep.support) + list(ep.query):
            assert not rec.labels & novel


def test_insufficient_samples_is_an_error(dataset):
    with pytest.raises(SamplingError, match="side 'novel'"):
        dataset.sample_episode("novel", ways=3, shots=1, n_query=1, seed=0)
    with pytest.raises(SamplingError):
        dataset.sample_episode("base", ways=1, shots=40, n_query=1, seed=0)


def test_one_shot_episode_minimal(dataset):
    ep = dataset.sample_episode("novel", 1, 1, 1, seed=3)
    assert len(ep.support) == 1 and len(ep.query) == 1
    assert ep.support[0].sample_id != ep.query[0].sample_id


def test_eligibility_requires_label_membership(dataset):
    for s in range(5):
        ep = dataset.sample_episode("base", 2, 2, 1, seed=s)
        i = 0
        for c in ep.class_roster:
            for rec in ep.support[i:i + 2]:
                assert c in rec.labels
            i += 2


def test_access_log_records_loads(synth_dir):
    ds = load_manifest(synth_dir / "manifest.json")
    assert ds.access_log == set()
    rec = ds.samples[0]
    ds.load_features(rec)
    assert ds.access_log == {rec.sample_id}


def test_gt_mask_labels_validated(tmp_path):
    from pixelmeta.tensorio import save_tensor

    path = write_tiny_dataset(tmp_path)
    ds = load_manifest(path)
    rec = ds.samples[0]
    bad = np.full((4, 4), 77, dtype=np.uint16)
    save_tensor(bad, rec.gt_mask_path)
    ds2 = load_manifest(path)
    rec2 = [r for r in ds2.samples if r.sample_id == rec.sample_id][0]
    with pytest.raises(ValidationError, match="77"):
        ds2.load_gt_mask(rec2)


def test_sample_episode_function_matches_method(dataset):
    ep1 = dataset.sample_episode("base", 1, 2, 1, seed=5)
    ep2 = sample_episode(dataset.samples, dataset.split, "base", 1, 2, 1, seed=5)
    assert ep1 == ep2

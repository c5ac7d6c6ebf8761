import json

import numpy as np
import pytest

from pixelmeta.data import load_manifest
from pixelmeta.synth import SynthConfig, generate_synthetic_dataset
from pixelmeta.tensorio import save_tensor


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthds")
    generate_synthetic_dataset(SynthConfig(seed=11), out)
    return out


@pytest.fixture(scope="session")
def dataset(synth_dir):
    return load_manifest(synth_dir / "manifest.json")


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    """A faster dataset for protocol and CLI tests."""
    out = tmp_path_factory.mktemp("smallds")
    cfg = SynthConfig(n_classes=4, n_base=2, height=16, width=16,
                      samples_per_class=6, seed=23)
    generate_synthetic_dataset(cfg, out)
    return out


@pytest.fixture(scope="session")
def small_dataset(small_synth_dir):
    return load_manifest(small_synth_dir / "manifest.json")


def write_tiny_dataset(root, n_classes=3, n_base=2, n_cam=2, per_class=2,
                       height=4, width=4, dim=3, embed_dim=4, with_gt=True,
                       seed=0, mutate=None):
    """Minimal hand-rolled dataset for manifest validation tests.

    `mutate` may edit the manifest document before it is written.
    """
    rng = np.random.default_rng(seed)
    tdir = root / "tensors"
    tdir.mkdir(parents=True, exist_ok=True)
    samples = []
    for c in range(1, n_classes + 1):
        for i in range(per_class):
            sid = f"c{c}_{i}"
            feat = rng.standard_normal((height, width, dim)).astype(np.float32)
            cams = rng.uniform(0, 1, (n_cam, height, width)).astype(np.float32)
            sal = rng.uniform(0, 1, (height, width)).astype(np.float32)
            mask = np.zeros((height, width), dtype=np.uint16)
            mask[0, 0] = c
            save_tensor(feat, tdir / f"{sid}_f.pxt")
            save_tensor(cams, tdir / f"{sid}_c.pxt")
            save_tensor(sal, tdir / f"{sid}_s.pxt")
            entry = {
                "id": sid, "labels": [c],
                "features": f"tensors/{sid}_f.pxt",
                "heatmaps": f"tensors/{sid}_c.pxt",
                "saliency": f"tensors/{sid}_s.pxt",
            }
            if with_gt:
                save_tensor(mask, tdir / f"{sid}_g.pxt")
                entry["gt_mask"] = f"tensors/{sid}_g.pxt"
            samples.append(entry)
    emb = rng.standard_normal((n_classes + n_cam, embed_dim)).astype(np.float32)
    save_tensor(emb, root / "emb.pxt")
    doc = {
        "classes": {str(c): f"class_{c}" for c in range(1, n_classes + 1)},
        "cam_classes": {str(100 + k): f"cam_{k}" for k in range(1, n_cam + 1)},
        "embedding_path": "emb.pxt",
        "splits": {
            "base": list(range(1, n_base + 1)),
            "novel": list(range(n_base + 1, n_classes + 1)),
        },
        "samples": samples,
    }
    if mutate:
        mutate(doc)
    path = root / "manifest.json"
    with open(path, "w") as f:
        json.dump(doc, f)
    return path

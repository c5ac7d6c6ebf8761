import numpy as np
import pytest

from pixelmeta_export.errors import ConfigError
from pixelmeta_export.models import (
    cam_heatmaps,
    feature_map,
    load_torchscript,
    saliency_map,
)


@pytest.fixture()
def image():
    return np.random.default_rng(3).uniform(0, 1, (3, 40, 50)).astype(np.float32)


def test_missing_checkpoint_names_path(tmp_path):
    with pytest.raises(ConfigError, match="nope.pt"):
        load_torchscript(tmp_path / "nope.pt", "CAM")


def test_non_torchscript_rejected(tmp_path):
    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"not a checkpoint")
    with pytest.raises(ConfigError, match="TorchScript"):
        load_torchscript(junk, "CAM")


def test_checkpoint_hash_recorded(checkpoints):
    bundle = load_torchscript(checkpoints["cam"], "CAM")
    assert len(bundle.sha256) == 64


def test_cam_contract(checkpoints, image):
    bundle = load_torchscript(checkpoints["cam"], "CAM")
    maps = cam_heatmaps(bundle, image, n_cam=4, size=33)
    assert maps.shape == (4, 33, 33)
    assert maps.dtype == np.float32
    assert maps.min() >= 0.0 and maps.max() <= 1.0
    again = cam_heatmaps(bundle, image, n_cam=4, size=33)
    assert maps.tobytes() == again.tobytes()


def test_cam_class_count_mismatch(checkpoints, image):
    bundle = load_torchscript(checkpoints["cam"], "CAM")
    with pytest.raises(ConfigError, match="4 maps"):
        cam_heatmaps(bundle, image, n_cam=7, size=33)


def test_feature_contract(checkpoints, image):
    bundle = load_torchscript(checkpoints["feat"], "feature")
    feats = feature_map(bundle, image, size=33)
    assert feats.shape == (33, 33, 6)
    assert np.all(np.isfinite(feats))


def test_saliency_contract(checkpoints, image):
    bundle = load_torchscript(checkpoints["sal"], "saliency")
    sal = saliency_map(bundle, image, size=33)
    assert sal.shape == (33, 33)
    assert sal.min() >= 0.0 and sal.max() <= 1.0
    raw = saliency_map(bundle, image, size=33, activation="minmax")
    assert raw.min() == 0.0 and raw.max() == 1.0
    with pytest.raises(ConfigError):
        saliency_map(bundle, image, size=33, activation="softmax")


def test_bad_image_shape_rejected(checkpoints):
    bundle = load_torchscript(checkpoints["sal"], "saliency")
    with pytest.raises(ConfigError):
        saliency_map(bundle, np.zeros((40, 50, 3), dtype=np.float32), size=33)

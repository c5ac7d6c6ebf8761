import csv

import numpy as np
import pytest
import torch
from PIL import Image

CLASS_NAMES = ["cat", "dog", "potted plant"]
CAM_NAMES = ["zebra", "lion", "tiger", "giraffe"]
ALL_TOKENS = ["cat", "dog", "potted", "plant", "zebra", "lion", "tiger",
              "giraffe", "goat", "sheep", "tree"]


class TinyCam(torch.nn.Module):
    def __init__(self, n_cam=4):
        super().__init__()
        self.conv = torch.nn.Conv2d(3, n_cam, 3, padding=1, stride=2)

    def forward(self, x):
        return self.conv(x)


class TinyFeat(torch.nn.Module):
    def __init__(self, dim=6):
        super().__init__()
        self.conv = torch.nn.Conv2d(3, dim, 3, padding=1, stride=4)

    def forward(self, x):
        return self.conv(x)


class TinySal(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = torch.nn.Conv2d(3, 1, 3, padding=1, stride=2)

    def forward(self, x):
        return self.conv(x)


@pytest.fixture(scope="session")
def checkpoints(tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpts")
    torch.manual_seed(7)
    paths = {}
    for name, module in (("cam", TinyCam()), ("feat", TinyFeat()),
                         ("sal", TinySal())):
        path = out / f"{name}.pt"
        torch.jit.save(torch.jit.script(module.eval()), str(path))
        paths[name] = path
    return paths


@pytest.fixture(scope="session")
def vec_file(tmp_path_factory):
    rng = np.random.default_rng(4)
    path = tmp_path_factory.mktemp("vec") / "tiny.vec"
    dim = 10
    with open(path, "w") as f:
        f.write(f"{len(ALL_TOKENS)} {dim}\n")
        for token in ALL_TOKENS:
            vec = rng.standard_normal(dim)
            f.write(token + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")
    return path


@pytest.fixture(scope="session")
def image_corpus(tmp_path_factory):
    """Three PNG images with labels and palette ground-truth masks."""
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(9)
    rows = []
    label_rows = []
    labels_by_image = {"img0": ["cat"], "img1": ["dog", "potted plant"],
                       "img2": ["potted plant"], "img3": ["cat"],
                       "img4": ["dog"], "img5": ["dog"]}
    ids_by_name = {n: i + 1 for i, n in enumerate(CLASS_NAMES)}
    for image_id, names in labels_by_image.items():
        arr = rng.integers(0, 256, size=(40, 50, 3), dtype=np.uint8)
        img_path = root / f"{image_id}.png"
        Image.fromarray(arr).save(img_path)
        mask = np.zeros((40, 50), dtype=np.uint8)
        y = 5
        for name in names:
            mask[y:y + 10, 8:30] = ids_by_name[name]
            y += 14
        mask[0, :] = 255  # void strip
        mask_path = root / f"{image_id}_gt.png"
        # grayscale keeps the raw indices; PIL remaps palette indices on save
        Image.fromarray(mask, mode="L").save(mask_path)
        rows.append([image_id, img_path.name])
        label_rows.append([image_id, ";".join(names), mask_path.name])
    images_csv = root / "images.csv"
    with open(images_csv, "w", newline="") as f:
        csv.writer(f).writerows(rows)
    labels_csv = root / "labels.csv"
    with open(labels_csv, "w", newline="") as f:
        csv.writer(f).writerows(label_rows)
    names_file = root / "classes.txt"
    names_file.write_text("\n".join(CLASS_NAMES) + "\n")
    cam_file = root / "cams.txt"
    cam_file.write_text("\n".join(CAM_NAMES) + "\n")
    base_file = root / "base.txt"
    base_file.write_text("cat\ndog\n")
    novel_file = root / "novel.txt"
    novel_file.write_text("potted plant\n")
    return {
        "root": root, "images_csv": images_csv, "labels_csv": labels_csv,
        "names_file": names_file, "cam_file": cam_file,
        "base_file": base_file, "novel_file": novel_file,
    }

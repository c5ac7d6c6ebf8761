"""Benchmark split definitions."""

from __future__ import annotations

from .errors import ConfigError

# the 20 object categories in their canonical index order
PASCAL_VOC_CLASSES = [
    "aeroplane", "bicycle", "bird", "boat", "bottle",
    "bus", "car", "cat", "chair", "cow",
    "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
]


def pascal5i_split(i: int) -> tuple[list[str], list[str]]:
    """(base names, novel names) for fold i of the even 4-way division."""
    if not 0 <= i <= 3:
        raise ConfigError(f"fold must be 0..3, got {i}")
    novel = PASCAL_VOC_CLASSES[5 * i:5 * (i + 1)]
    base = [c for c in PASCAL_VOC_CLASSES if c not in novel]
    return base, novel

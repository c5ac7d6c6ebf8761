"""Word-vector export: class names embedded via a fastText-style .vec file.

The .vec text format: a "count dim" header line, then one token per line
followed by its vector. Only tokens actually needed are kept in memory.
Multi-word class names are averaged token-wise.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ConfigError

_SPLIT = re.compile(r"[\s_\-]+")


def name_tokens(name: str) -> list[str]:
    return [t for t in _SPLIT.split(name.strip().lower()) if t]


def load_word_vectors(path: str | Path, vocab: set[str]) -> tuple[dict, int]:
    """Stream the .vec file, keeping only `vocab` tokens.

    Returns (token -> float64 vector, dimension).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"word vector file not found: {path}")
    found: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8", errors="replace") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ConfigError(f"{path}: expected 'count dim' header line")
        dim = int(header[1])
        for line in f:
            parts = line.rstrip().split(" ")
            token = parts[0]
            if token not in vocab or token in found:
                continue
            vec = np.array(parts[1:], dtype=np.float64)
            if len(vec) != dim:
                raise ConfigError(f"{path}: row for {token!r} has {len(vec)} values")
            found[token] = vec
            if len(found) == len(vocab):
                break
    return found, dim


def embed_names(names: list[str], path: str | Path) -> np.ndarray:
    """One vector per name, in order; unresolvable names abort with a list."""
    vocab = {t for name in names for t in name_tokens(name)}
    vectors, dim = load_word_vectors(path, vocab)
    rows = []
    missing = []
    for name in names:
        toks = [t for t in name_tokens(name) if t in vectors]
        if not toks:
            missing.append(name)
            continue
        rows.append(np.mean([vectors[t] for t in toks], axis=0))
    if missing:
        raise ConfigError(f"no word vectors for class names: {missing}")
    matrix = np.asarray(rows)
    norms = np.linalg.norm(matrix, axis=1)
    if (norms == 0).any():
        zero = [names[i] for i in np.flatnonzero(norms == 0)]
        raise ConfigError(f"zero-norm embeddings for: {zero}")
    return matrix

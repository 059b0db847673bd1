"""Bundled demo datasets and dataset-name resolution."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .graph import write_dataset

DATA_ROOT = Path(__file__).parent / "data"
BUNDLED = ("synthetic50", "toy4")
ENV_DATA_DIR = "SANS_DATA_DIR"


def synthetic_kg(seed: int = 7, cluster_size: int = 25, similar_per_cluster: int = 30):
    """Two entity clusters joined by three relations.

    ``next`` chains each cluster, ``member_of`` points every entity at its
    cluster hub and ``similar_to`` links random pairs inside a cluster. The
    triples are shuffled and split 80/10/10; held-out triples whose entities
    never occur in train are moved back into train.
    """
    rng = np.random.default_rng(seed)
    triples = []
    for c in "ab":
        names = [f"{c}{i:02d}" for i in range(cluster_size)]
        for i in range(cluster_size - 1):
            triples.append((names[i], "next", names[i + 1]))
        for i in range(1, cluster_size):
            triples.append((names[i], "member_of", names[0]))
        seen = set()
        while len(seen) < similar_per_cluster:
            i, j = rng.choice(cluster_size, size=2, replace=False)
            if (i, j) not in seen and (j, i) not in seen:
                seen.add((int(i), int(j)))
        for i, j in sorted(seen):
            triples.append((names[i], "similar_to", names[j]))
    order = rng.permutation(len(triples))
    shuffled = [triples[i] for i in order]
    n_valid = n_test = len(shuffled) // 10
    train = shuffled[: len(shuffled) - n_valid - n_test]
    valid = shuffled[len(train) : len(train) + n_valid]
    test = shuffled[len(train) + n_valid :]
    train_entities = {e for h, _, t in train for e in (h, t)}
    kept = {"valid": [], "test": []}
    for name, rows in (("valid", valid), ("test", test)):
        for h, r, t in rows:
            if h in train_entities and t in train_entities:
                kept[name].append((h, r, t))
            else:
                train.append((h, r, t))
                train_entities.update((h, t))
    return {"train": train, "valid": kept["valid"], "test": kept["test"]}


def toy_path():
    """The path graph a - b - c - d."""
    return {"train": [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d")], "valid": [], "test": []}


def write_bundled(root: Path = DATA_ROOT) -> None:
    write_dataset(root / "synthetic50", synthetic_kg())
    write_dataset(root / "toy4", toy_path())


def resolve_dataset(name: str | os.PathLike) -> Path:
    """Map a directory path, bundled name, or name under ``$SANS_DATA_DIR``."""
    p = Path(name)
    if p.is_dir():
        return p.resolve()
    if str(name) in BUNDLED:
        return DATA_ROOT / str(name)
    root = os.environ.get(ENV_DATA_DIR)
    if root and (Path(root) / str(name)).is_dir():
        return (Path(root) / str(name)).resolve()
    hint = f" or under ${ENV_DATA_DIR}={root}" if root else f" (set ${ENV_DATA_DIR} to a dataset root)"
    raise DatasetFormatError(f"dataset {str(name)!r} not found as a directory{hint}")

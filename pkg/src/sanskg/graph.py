"""Loading, integer encoding and indexing of knowledge-graph triples."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, DatasetFormatError

SPLITS = ("train", "valid", "test")


@dataclass
class Vocabulary:
    """Dense 0-based ids assigned in order of first appearance."""

    names: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)

    def add(self, name: str) -> int:
        idx = self.index.get(name)
        if idx is None:
            idx = len(self.names)
            self.index[name] = idx
            self.names.append(name)
        return idx

    def lookup(self, name: str) -> int:
        return self.index[name]

    def name(self, idx: int) -> str:
        return self.names[idx]

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self.index


class CSR:
    """Compressed rows of (relation, neighbor) pairs."""

    __slots__ = ("indptr", "relations", "neighbors")

    def __init__(self, indptr: np.ndarray, relations: np.ndarray, neighbors: np.ndarray):
        self.indptr = indptr
        self.relations = relations
        self.neighbors = neighbors

    @classmethod
    def build(cls, sources: np.ndarray, relations: np.ndarray, targets: np.ndarray, num_rows: int) -> CSR:
        order = np.lexsort((targets, relations, sources))
        counts = np.bincount(sources, minlength=num_rows)
        indptr = np.zeros(num_rows + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(indptr, relations[order].astype(np.int64), targets[order].astype(np.int64))

    def row(self, i: int) -> list[tuple[int, int]]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return list(zip(self.relations[lo:hi].tolist(), self.neighbors[lo:hi].tolist()))

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def __len__(self) -> int:
        return len(self.indptr) - 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CSR):
            return NotImplemented
        return (
            np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.relations, other.relations)
            and np.array_equal(self.neighbors, other.neighbors)
        )


def _empty_triples() -> np.ndarray:
    return np.zeros((0, 3), dtype=np.int64)


class TripleStore:
    """Integer-encoded knowledge graph.

    ``train``, ``valid`` and ``test`` are ``(n, 3)`` int64 arrays of
    ``(head, relation, tail)`` rows and keep duplicates. ``observed`` is the
    deduplicated union of the three splits, stored as sorted int64 keys.
    Adjacency is built from ``train`` only: ``out_edges`` rows are indexed by
    head and hold ``(relation, tail)``, ``in_edges`` rows are indexed by tail
    and hold ``(relation, head)``.
    """

    def __init__(
        self,
        entities: Vocabulary,
        relations: Vocabulary,
        train: np.ndarray,
        valid: np.ndarray,
        test: np.ndarray,
    ):
        self.entities = entities
        self.relations = relations
        self.train = np.asarray(train, dtype=np.int64).reshape(-1, 3)
        self.valid = np.asarray(valid, dtype=np.int64).reshape(-1, 3)
        self.test = np.asarray(test, dtype=np.int64).reshape(-1, 3)
        ne, nr = self.num_entities, self.num_relations
        for split in SPLITS:
            arr = getattr(self, split)
            if len(arr) and (
                arr.min() < 0 or arr[:, [0, 2]].max() >= ne or arr[:, 1].max() >= nr
            ):
                raise ContractViolation(f"{split} split holds ids outside the vocabularies")

        everything = np.concatenate([self.train, self.valid, self.test])
        self._hr_keys = np.unique(self._key(everything[:, 0], everything[:, 1], everything[:, 2]))
        self._rt_keys = np.unique(self._key(everything[:, 2], everything[:, 1], everything[:, 0]))
        self._train_hr_keys = np.unique(self._key(self.train[:, 0], self.train[:, 1], self.train[:, 2]))
        self._train_rt_keys = np.unique(self._key(self.train[:, 2], self.train[:, 1], self.train[:, 0]))

        h, r, t = self.train[:, 0], self.train[:, 1], self.train[:, 2]
        self.out_edges = CSR.build(h, r, t, ne)
        self.in_edges = CSR.build(t, r, h, ne)
        self._sym = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_labeled(
        cls,
        train: Iterable[Sequence[str]],
        valid: Iterable[Sequence[str]] = (),
        test: Iterable[Sequence[str]] = (),
    ) -> TripleStore:
        entities, relations = Vocabulary(), Vocabulary()
        splits = []
        for rows in (train, valid, test):
            enc = [(entities.add(h), relations.add(r), entities.add(t)) for h, r, t in rows]
            splits.append(np.array(enc, dtype=np.int64).reshape(-1, 3))
        return cls(entities, relations, *splits)

    @classmethod
    def from_ids(
        cls,
        num_entities: int,
        num_relations: int,
        train,
        valid=None,
        test=None,
    ) -> TripleStore:
        """Build a store over synthetic names ``e0..`` / ``r0..``."""
        entities = Vocabulary()
        for i in range(num_entities):
            entities.add(f"e{i}")
        relations = Vocabulary()
        for i in range(num_relations):
            relations.add(f"r{i}")
        valid = _empty_triples() if valid is None else valid
        test = _empty_triples() if test is None else test
        return cls(entities, relations, train, valid, test)

    # -- sizes ------------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_observed(self) -> int:
        return len(self._hr_keys)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ContractViolation(f"unknown split {name!r}")
        return getattr(self, name)

    # -- membership -------------------------------------------------------

    def _key(self, a, r, b):
        # (a, r, b) -> (a * |R| + r) * |E| + b; sorted keys group by (a, r)
        ne, nr = self.num_entities, self.num_relations
        return (np.asarray(a, dtype=np.int64) * nr + np.asarray(r, dtype=np.int64)) * ne + np.asarray(
            b, dtype=np.int64
        )

    def _check_ids(self, h, r, t) -> None:
        h, r, t = np.asarray(h), np.asarray(r), np.asarray(t)
        ne, nr = self.num_entities, self.num_relations
        if h.size and (
            h.min() < 0 or h.max() >= ne or t.min() < 0 or t.max() >= ne or r.min() < 0 or r.max() >= nr
        ):
            raise ContractViolation("triple id out of range")

    @staticmethod
    def _member(sorted_keys: np.ndarray, keys: np.ndarray) -> np.ndarray:
        if len(sorted_keys) == 0:
            return np.zeros(np.shape(keys), dtype=bool)
        pos = np.searchsorted(sorted_keys, keys)
        pos = np.minimum(pos, len(sorted_keys) - 1)
        return sorted_keys[pos] == keys

    def observed_mask(self, h, r, t, train_only: bool = False) -> np.ndarray:
        """Vectorised membership test; arguments broadcast against each other."""
        self._check_ids(h, r, t)
        keys = self._key(h, r, t)
        return self._member(self._train_hr_keys if train_only else self._hr_keys, keys)

    def count_tails(self, h, r, train_only: bool = False) -> np.ndarray:
        """Number of distinct observed tails for each ``(h, r)``."""
        keys = self._train_hr_keys if train_only else self._hr_keys
        lo = self._key(h, r, 0)
        return np.searchsorted(keys, lo + self.num_entities) - np.searchsorted(keys, lo)

    def count_heads(self, r, t, train_only: bool = False) -> np.ndarray:
        keys = self._train_rt_keys if train_only else self._rt_keys
        lo = self._key(t, r, 0)
        return np.searchsorted(keys, lo + self.num_entities) - np.searchsorted(keys, lo)

    def known_tails(self, h: int, r: int) -> np.ndarray:
        lo = int(self._key(h, r, 0))
        a, b = np.searchsorted(self._hr_keys, [lo, lo + self.num_entities])
        return self._hr_keys[a:b] - lo

    def known_heads(self, r: int, t: int) -> np.ndarray:
        lo = int(self._key(t, r, 0))
        a, b = np.searchsorted(self._rt_keys, [lo, lo + self.num_entities])
        return self._rt_keys[a:b] - lo

    def observed_triples(self) -> np.ndarray:
        keys = self._hr_keys
        ne, nr = self.num_entities, self.num_relations
        t = keys % ne
        hr = keys // ne
        return np.stack([hr // nr, hr % nr, t], axis=1)

    # -- adjacency --------------------------------------------------------

    def symmetric_neighbors(self) -> CSR:
        """Per-entity incident edges with both orientations merged.

        Every train triple contributes one entry to its head's row and one to
        its tail's row, so parallel edges and relation multiplicity are kept.
        A self-loop contributes two entries to its own row.
        """
        if self._sym is None:
            h, r, t = self.train[:, 0], self.train[:, 1], self.train[:, 2]
            self._sym = CSR.build(
                np.concatenate([h, t]), np.concatenate([r, r]), np.concatenate([t, h]), self.num_entities
            )
        return self._sym

    def entity_adjacency(self, symmetric: bool = True) -> sp.csr_matrix:
        """Boolean ``|E| x |E|`` adjacency of the train graph (relations collapsed)."""
        n = self.num_entities
        h, t = self.train[:, 0], self.train[:, 2]
        if symmetric:
            h, t = np.concatenate([h, t]), np.concatenate([t, h])
        mat = sp.csr_matrix((np.ones(len(h), dtype=np.int8), (h, t)), shape=(n, n))
        mat.sum_duplicates()
        mat.data[:] = 1
        return mat

    # -- decoding ---------------------------------------------------------

    def decode(self, triple) -> tuple[str, str, str]:
        h, r, t = (int(x) for x in triple)
        return self.entities.name(h), self.relations.name(r), self.entities.name(t)

    def encode(self, h: str, r: str, t: str) -> tuple[int, int, int]:
        return self.entities.lookup(h), self.relations.lookup(r), self.entities.lookup(t)


def is_observed(store: TripleStore, triple) -> bool:
    """True iff ``triple`` occurs in train, valid or test."""
    h, r, t = (int(x) for x in triple)
    return bool(store.observed_mask(h, r, t))


def _read_split(path: Path) -> list[tuple[str, str, str]]:
    if not path.is_file():
        raise DatasetFormatError(f"missing dataset file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetFormatError(
                    f"{path.name}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def load_dataset(dir_path: str | os.PathLike) -> TripleStore:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from a directory."""
    root = Path(dir_path)
    raw = [_read_split(root / f"{split}.txt") for split in SPLITS]
    return TripleStore.from_labeled(*raw)


def write_dicts(store: TripleStore, out_dir: str | os.PathLike) -> None:
    """Dump ``entities.dict`` and ``relations.dict`` as ``id<TAB>name`` lines."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fname, vocab in (("entities.dict", store.entities), ("relations.dict", store.relations)):
        with open(out / fname, "w", encoding="utf-8") as fh:
            for i, name in enumerate(vocab.names):
                fh.write(f"{i}\t{name}\n")


def write_dataset(out_dir: str | os.PathLike, splits: dict[str, Iterable[Sequence[str]]]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        with open(out / f"{split}.txt", "w", encoding="utf-8") as fh:
            for h, r, t in splits.get(split, ()):
                fh.write(f"{h}\t{r}\t{t}\n")
    return out

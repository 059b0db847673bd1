"""Filtered link-prediction ranking (MRR, Hits@N)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractViolation, VocabularyMismatchError
from .graph import TripleStore
from .models import EmbeddingModel

HITS_AT = (1, 3, 10)


@dataclass
class EvalReport:
    mrr: float
    hits: dict[int, float]
    num_queries: int
    per_side: dict[str, "EvalReport"] = field(default_factory=dict)

    def as_dict(self, prefix: str = "") -> dict[str, float]:
        out = {f"{prefix}mrr": self.mrr, f"{prefix}num_queries": self.num_queries}
        for n in sorted(self.hits):
            out[f"{prefix}hits@{n}"] = self.hits[n]
        for side, rep in self.per_side.items():
            out.update(rep.as_dict(prefix=f"{prefix}{side}."))
        return out

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.as_dict().items())

    def to_table(self, title: str = "") -> str:
        rows = [("both", self)] + list(self.per_side.items())
        head = f"{'side':<6} {'queries':>8} {'MRR':>8}" + "".join(f" {'H@' + str(n):>7}" for n in HITS_AT)
        lines = [title] if title else []
        lines += [head, "-" * len(head)]
        for name, rep in rows:
            lines.append(
                f"{name:<6} {rep.num_queries:>8d} {rep.mrr:>8.4f}"
                + "".join(f" {rep.hits[n]:>7.4f}" for n in HITS_AT)
            )
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else f"{v:.10g}"


def filtered_ranks(distances: np.ndarray, targets: np.ndarray, filters: Sequence[np.ndarray]) -> np.ndarray:
    """Rank of each target among its row of distances (lower is better).

    Entities listed in ``filters[i]`` other than ``targets[i]`` are pushed to
    the worst position. Ties are resolved by the mean position of the tied
    block, so ``rank = 1 + #better + (#tied - 1) / 2``.
    """
    d = np.array(distances, dtype=np.float64, copy=True)
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(len(d))
    target_d = d[rows, targets].copy()
    for i, f in enumerate(filters):
        if len(f):
            d[i, f] = np.inf
    d[rows, targets] = target_d
    better = (d < target_d[:, None]).sum(1)
    tied = (d == target_d[:, None]).sum(1)
    return 1.0 + better + (tied - 1) / 2.0


def summarize(ranks: np.ndarray, per_side: dict[str, np.ndarray] | None = None) -> EvalReport:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        raise ContractViolation("no queries to summarise")
    hits = {n: float((ranks <= n).mean()) for n in HITS_AT}
    rep = EvalReport(float((1.0 / ranks).mean()), hits, int(len(ranks)))
    for side, r in (per_side or {}).items():
        rep.per_side[side] = summarize(r)
    return rep


def side_ranks(
    model: EmbeddingModel,
    store: TripleStore,
    triples: np.ndarray,
    side: str,
    filtered: bool = True,
    chunk: int = 256,
) -> np.ndarray:
    ranks = np.empty(len(triples))
    for s in range(0, len(triples), chunk):
        part = triples[s : s + chunk]
        h, r, t = part[:, 0], part[:, 1], part[:, 2]
        if side == "tail":
            dist = model.distances_all(h, r, "tail")
            targets = t
            filters = [store.known_tails(a, b) for a, b in zip(h.tolist(), r.tolist())] if filtered else []
        else:
            dist = model.distances_all(t, r, "head")
            targets = h
            filters = [store.known_heads(b, c) for b, c in zip(r.tolist(), t.tolist())] if filtered else []
        ranks[s : s + chunk] = filtered_ranks(dist, targets, filters)
    return ranks


def evaluate(
    model: EmbeddingModel, store: TripleStore, split: str = "test", filtered: bool = True
) -> EvalReport:
    """Filtered MRR and Hits@{1,3,10} over both corruption sides of a split.

    The filter set is every triple in train, valid and test. ``filtered=False``
    gives the raw setting and exists for debugging.
    """
    if model.num_entities != store.num_entities or model.num_relations != store.num_relations:
        raise VocabularyMismatchError(
            f"model has {model.num_entities} entities / {model.num_relations} relations, "
            f"dataset has {store.num_entities} / {store.num_relations}"
        )
    triples = store.split(split)
    if len(triples) == 0:
        raise ContractViolation(f"split {split!r} is empty")
    per_side = {side: side_ranks(model, store, triples, side, filtered) for side in ("head", "tail")}
    return summarize(np.concatenate([per_side["head"], per_side["tail"]]), per_side)

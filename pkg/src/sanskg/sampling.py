"""Negative samplers: uniform and k-hop restricted (exact or walk-weighted).

Every sampler returns a :class:`NegativeBatch` of filtered negatives, i.e.
no candidate completes a triple that is already observed. Self-adversarial
variants reuse the same candidates and only change the weights, which are
computed by the trainer from current model scores via
:func:`adversarial_weights`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractViolation, NumericError, RejectionBudgetExceeded
from .graph import TripleStore
from .neighborhood import KHopNeighborhood, Kind

REJECTION_FACTOR = 100


class Variant(str, Enum):
    UNIFORM = "uniform"
    SANS = "sans"
    RW_SANS = "rw_sans"


class Side(str, Enum):
    HEAD = "head"
    TAIL = "tail"


class Fallback(str, Enum):
    UNIFORM = "uniform"
    SKIP = "skip"


@dataclass
class SamplerConfig:
    variant: Variant = Variant.UNIFORM
    adversarial: bool = False
    n: int = 128
    k: int = 2
    omega: int = 0
    adv_temperature: float = 1.0
    fallback: Fallback = Fallback.UNIFORM
    seed: int = 0
    train_only_filter: bool = False

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.fallback = Fallback(self.fallback)
        if self.n < 1:
            raise ConfigError("negatives per positive must be >= 1")
        if self.adv_temperature < 0:
            raise ConfigError("adversarial temperature must be non-negative")
        if self.variant is not Variant.UNIFORM and self.k < 1:
            raise ConfigError("k must be >= 1 for k-hop samplers")

    @property
    def uses_neighborhood(self) -> bool:
        return self.variant is not Variant.UNIFORM

    @property
    def label(self) -> str:
        base = {"uniform": "Uniform", "sans": "SANS", "rw_sans": "RW-SANS"}[self.variant.value]
        if self.adversarial:
            return "Self-Adv." if self.variant is Variant.UNIFORM else f"Self-Adv. {base}"
        return base if self.variant is Variant.UNIFORM else f"Uniform {base}"


@dataclass
class NegativeBatch:
    """Corrupted entities for a batch of positives.

    ``skipped`` flags rows excluded from the loss (``Fallback.SKIP``);
    ``fell_back`` flags rows whose candidates came from the fallback path.
    """

    side: Side
    candidates: np.ndarray
    weights: np.ndarray
    skipped: np.ndarray
    fell_back: np.ndarray

    def __len__(self) -> int:
        return len(self.candidates)

    def completed(self, positives: np.ndarray) -> np.ndarray:
        """The ``(B, n, 3)`` negative triples."""
        trip = np.repeat(positives[:, None, :], self.candidates.shape[1], axis=1).copy()
        trip[:, :, 0 if self.side is Side.HEAD else 2] = self.candidates
        return trip


def _split(positives: np.ndarray, side: Side):
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if len(positives) == 0:
        raise ContractViolation("positive batch is empty")
    anchor = positives[:, 2] if side is Side.HEAD else positives[:, 0]
    return positives, anchor, positives[:, 1]


def _observed(store, side, anchor, rel, cand, train_only):
    if side is Side.TAIL:
        return store.observed_mask(anchor, rel, cand, train_only=train_only)
    return store.observed_mask(cand, rel, anchor, train_only=train_only)


def _uniform_fill(store, side, anchor, rel, n, rng, train_only, positives):
    b = len(anchor)
    ne = store.num_entities
    cand = rng.integers(0, ne, size=(b, n))
    bad = _observed(store, side, anchor[:, None], rel[:, None], cand, train_only)
    rejections = bad.sum(1)
    budget = REJECTION_FACTOR * n
    while bad.any():
        over = np.flatnonzero(rejections > budget)
        if len(over):
            offending = tuple(positives[over[0]].tolist())
            raise RejectionBudgetExceeded(
                f"uniform sampling rejected more than {budget} candidates for positive {offending}",
                positive=offending,
            )
        rows, cols = np.nonzero(bad)
        fresh = rng.integers(0, ne, size=len(rows))
        cand[rows, cols] = fresh
        still = _observed(store, side, anchor[rows], rel[rows], fresh, train_only)
        bad[rows, cols] = still
        np.add.at(rejections, rows[still], 1)
    return cand


def sample_uniform(
    store: TripleStore, positives, side, n: int, rng: np.random.Generator, train_only: bool = False
) -> NegativeBatch:
    """Uniform corruption over all entities with rejection of observed triples.

    Raises:
        RejectionBudgetExceeded: more than ``100 * n`` rejections for one positive.
    """
    side = Side(side)
    positives, anchor, rel = _split(positives, side)
    cand = _uniform_fill(store, side, anchor, rel, n, rng, train_only, positives)
    b = len(cand)
    return NegativeBatch(
        side, cand, np.full((b, n), 1.0 / n), np.zeros(b, dtype=bool), np.zeros(b, dtype=bool)
    )


def _row_cumulative(neighborhood: KHopNeighborhood) -> np.ndarray:
    cum = getattr(neighborhood, "_cum_counts", None)
    if cum is None:
        counts = neighborhood.counts if neighborhood.counts is not None else np.ones(neighborhood.nnz)
        cum = np.cumsum(counts, dtype=np.int64)
        neighborhood._cum_counts = cum
    return cum


def draw_from_rows(neighborhood: KHopNeighborhood, anchors, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` members per anchor row (rows must be nonempty).

    Exact rows are sampled uniformly; walk rows proportionally to counts.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    lo = neighborhood.indptr[anchors]
    hi = neighborhood.indptr[anchors + 1]
    if neighborhood.kind is Kind.EXACT:
        pick = lo[:, None] + (rng.random((len(anchors), size)) * (hi - lo)[:, None]).astype(np.int64)
        pick = np.minimum(pick, hi[:, None] - 1)
    else:
        cum = _row_cumulative(neighborhood)
        base = np.where(lo > 0, cum[np.maximum(lo - 1, 0)], 0)
        total = cum[hi - 1] - base
        target = base[:, None] + (rng.random((len(anchors), size)) * total[:, None]).astype(np.int64)
        pick = np.searchsorted(cum, target, side="right")
        pick = np.clip(pick, lo[:, None], hi[:, None] - 1)
    return neighborhood.members[pick]


def _fully_rejected(store, neighborhood, side, anchor, rel, train_only) -> np.ndarray:
    sizes = neighborhood.row_sizes()[anchor]
    if side is Side.TAIL:
        known = store.count_tails(anchor, rel, train_only=train_only)
    else:
        known = store.count_heads(rel, anchor, train_only=train_only)
    out = sizes == 0
    # a row can only be exhausted if it has no more members than known completions
    for i in np.flatnonzero((sizes > 0) & (sizes <= known)):
        members = neighborhood.row_members(anchor[i])
        out[i] = _observed(store, side, anchor[i], rel[i], members, train_only).all()
    return out


def sample_sans(
    store: TripleStore,
    neighborhood: KHopNeighborhood,
    positives,
    side,
    n: int,
    rng: np.random.Generator,
    fallback=Fallback.UNIFORM,
    train_only: bool = False,
) -> NegativeBatch:
    """Corrupt with members of the anchor's k-hop row.

    For tail corruption the anchor is the head, for head corruption the tail.
    Rows that are empty, or whose every member completes an observed triple,
    or that exhaust the rejection budget, follow ``fallback``.
    """
    side = Side(side)
    fallback = Fallback(fallback)
    if neighborhood.num_entities != store.num_entities:
        raise ContractViolation(
            f"neighborhood covers {neighborhood.num_entities} entities, store has {store.num_entities}"
        )
    positives, anchor, rel = _split(positives, side)
    b = len(positives)
    dead = _fully_rejected(store, neighborhood, side, anchor, rel, train_only)
    cand = np.zeros((b, n), dtype=np.int64)
    live = np.flatnonzero(~dead)
    budget = REJECTION_FACTOR * n
    if len(live):
        a, r = anchor[live], rel[live]
        c = draw_from_rows(neighborhood, a, n, rng)
        bad = _observed(store, side, a[:, None], r[:, None], c, train_only)
        rejections = bad.sum(1)
        while bad.any():
            over = rejections > budget
            if over.any():
                dead[live[over]] = True
                bad &= ~over[:, None]
            rows, cols = np.nonzero(bad)
            if len(rows) == 0:
                break
            fresh = draw_from_rows(neighborhood, a[rows], 1, rng)[:, 0]
            c[rows, cols] = fresh
            still = _observed(store, side, a[rows], r[rows], fresh, train_only)
            bad[rows, cols] = still
            np.add.at(rejections, rows[still], 1)
        cand[live] = c
    skipped = np.zeros(b, dtype=bool)
    if dead.any():
        idx = np.flatnonzero(dead)
        if fallback is Fallback.UNIFORM:
            cand[idx] = _uniform_fill(
                store, side, anchor[idx], rel[idx], n, rng, train_only, positives[idx]
            )
        else:
            cand[idx] = rng.integers(0, store.num_entities, size=(len(idx), n))
            skipped[idx] = True
    return NegativeBatch(side, cand, np.full((b, n), 1.0 / n), skipped, dead.copy())


def adversarial_weights(scores, temperature: float) -> np.ndarray:
    """Softmax of plausibility scores at the given temperature (last axis).

    Raises:
        NumericError: any score is NaN or infinite.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise NumericError("adversarial weighting received a non-finite score")
    if temperature < 0:
        raise ContractViolation("temperature must be non-negative")
    z = temperature * scores
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


class Sampler:
    """Binds a config to a store (and neighborhood) with its own generator."""

    def __init__(
        self,
        store: TripleStore,
        config: SamplerConfig,
        neighborhood: Optional[KHopNeighborhood] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        if config.uses_neighborhood and neighborhood is None:
            raise ConfigError(f"sampler {config.variant.value} needs a k-hop neighborhood")
        if neighborhood is not None and config.uses_neighborhood:
            want = Kind.EXACT if config.variant is Variant.SANS else Kind.WALKS
            if neighborhood.kind is not want:
                raise ConfigError(
                    f"sampler {config.variant.value} needs a {want.name.lower()} neighborhood, "
                    f"got {neighborhood.kind.name.lower()}"
                )
        self.store = store
        self.config = config
        self.neighborhood = neighborhood
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)

    def sample(self, positives, side) -> NegativeBatch:
        cfg = self.config
        if not cfg.uses_neighborhood:
            return sample_uniform(self.store, positives, side, cfg.n, self.rng, cfg.train_only_filter)
        return sample_sans(
            self.store, self.neighborhood, positives, side, cfg.n, self.rng,
            fallback=cfg.fallback, train_only=cfg.train_only_filter,
        )

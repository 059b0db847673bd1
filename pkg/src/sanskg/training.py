"""Contrastive training: margin log-sigmoid loss, sparse Adam, training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ContractViolation, NumericError
from .graph import TripleStore
from .models import EmbeddingModel
from .neighborhood import KHopNeighborhood
from .sampling import NegativeBatch, Sampler, SamplerConfig, Side, adversarial_weights

log = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    positive_term: float
    negative_term: float

    @property
    def total(self) -> float:
        return self.positive_term + self.negative_term


def _softplus(x):
    return np.logaddexp(0.0, x)


def loss(
    model: EmbeddingModel, positive, candidates, weights, side=Side.TAIL
) -> LossBreakdown:
    """Loss of one positive against its weighted negatives.

    ``-log sigmoid(gamma - d_pos) - sum_i w_i log sigmoid(d_neg_i - gamma)``,
    with ``-log sigmoid(x)`` evaluated as ``softplus(-x)``.
    """
    side = Side(side)
    h, r, t = (int(x) for x in positive)
    candidates = np.asarray(candidates, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if abs(weights.sum() - 1.0) > 1e-6:
        raise ContractViolation("negative weights must sum to 1")
    d_pos = float(model.distance(h, r, t))
    if side is Side.TAIL:
        d_neg = model.distance(h, r, candidates)
    else:
        d_neg = model.distance(candidates, r, t)
    pos = float(_softplus(d_pos - model.gamma))
    neg = float((weights * _softplus(model.gamma - d_neg)).sum())
    if not (np.isfinite(pos) and np.isfinite(neg)):
        raise NumericError(f"non-finite loss for triple {(h, r, t)}")
    return LossBreakdown(pos, neg)


@dataclass
class SparseGrad:
    """Row-sparse gradient: unique row ids and their gradient rows."""

    rows: np.ndarray
    values: np.ndarray


def _accumulate(ids: list, vals: list, width: int, dtype) -> SparseGrad:
    ids = np.concatenate(ids)
    vals = np.concatenate(vals).reshape(-1, width)
    order = np.argsort(ids, kind="stable")
    ids = ids[order]
    starts = np.flatnonzero(np.concatenate([[True], ids[1:] != ids[:-1]]))
    return SparseGrad(ids[starts], np.add.reduceat(vals[order], starts, axis=0).astype(dtype))


def batch_loss_and_grad(
    model: EmbeddingModel,
    positives: np.ndarray,
    batches: list[NegativeBatch],
    adversarial: bool = False,
    temperature: float = 1.0,
    weight_override: Optional[list[np.ndarray]] = None,
):
    """Summed-over-sides, mean-over-positives loss and its row-sparse gradient.

    Self-adversarial weights come from the current plausibility scores and
    are treated as constants. ``weight_override`` replaces the weights
    outright (used to probe that weights carry no gradient).

    Returns ``(LossBreakdown, {"entity": SparseGrad, "relation": SparseGrad})``.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    gamma = model.gamma
    ent_ids, ent_vals, rel_ids, rel_vals = [], [], [], []
    pos_total = neg_total = 0.0
    dtype = np.result_type(model.entity, model.relation)
    for bi, batch in enumerate(batches):
        active = ~batch.skipped
        if not active.any():
            continue
        pos = positives[active]
        cand = batch.candidates[active]
        b, n = cand.shape
        h, r, t = pos[:, 0], pos[:, 1], pos[:, 2]
        hv, rv, tv = model.entity[h], model.relation[r], model.entity[t]
        d_pos = model.distance_vectors(hv, rv, tv)

        cv = model.entity[cand]
        if batch.side is Side.TAIL:
            nh, nt = hv[:, None, :], cv
        else:
            nh, nt = cv, tv[:, None, :]
        nr = rv[:, None, :]
        d_neg = model.distance_vectors(nh, nr, nt)

        if weight_override is not None:
            w = np.asarray(weight_override[bi], dtype=np.float64)[active]
        elif adversarial:
            w = adversarial_weights(gamma - d_neg, temperature)
        else:
            w = batch.weights[active]

        pos_terms = _softplus(d_pos - gamma)
        neg_terms = (w * _softplus(gamma - d_neg)).sum(1)
        if not (np.all(np.isfinite(pos_terms)) and np.all(np.isfinite(neg_terms))):
            bad = int(np.flatnonzero(~np.isfinite(pos_terms + neg_terms))[0])
            raise NumericError(f"non-finite loss for triple {tuple(pos[bad].tolist())}")
        pos_total += float(pos_terms.mean())
        neg_total += float(neg_terms.mean())

        c_pos = (expit(d_pos - gamma) / b)[:, None]
        c_neg = (-w * expit(gamma - d_neg) / b)[:, :, None]
        gh, gr, gt = model.gradient_vectors(hv, rv, tv)
        ngh, ngr, ngt = model.gradient_vectors(nh, nr, nt)
        ngh, ngr, ngt = c_neg * ngh, c_neg * ngr, c_neg * ngt

        ent_ids += [h, t]
        ent_vals += [c_pos * gh, c_pos * gt]
        rel_ids += [r]
        rel_vals += [c_pos * gr + ngr.sum(1)]
        if batch.side is Side.TAIL:
            ent_ids += [h, cand.ravel()]
            ent_vals += [ngh.sum(1), ngt.reshape(b * n, -1)]
        else:
            ent_ids += [cand.ravel(), t]
            ent_vals += [ngh.reshape(b * n, -1), ngt.sum(1)]

    ew, rw = model.entity.shape[1], model.relation.shape[1]
    if not ent_ids:
        empty = np.zeros(0, dtype=np.int64)
        grads = {"entity": SparseGrad(empty, np.zeros((0, ew), dtype)),
                 "relation": SparseGrad(empty, np.zeros((0, rw), dtype))}
    else:
        grads = {"entity": _accumulate(ent_ids, ent_vals, ew, dtype),
                 "relation": _accumulate(rel_ids, rel_vals, rw, dtype)}
    return LossBreakdown(pos_total, neg_total), grads


# -- optimiser ----------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: np.ndarray  # per-row step counts

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> AdamState:
        return cls(np.zeros_like(param), np.zeros_like(param), np.zeros(param.shape[0], dtype=np.int64))


def adam_step(
    params: np.ndarray,
    grads,
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    rows: Optional[np.ndarray] = None,
) -> None:
    """In-place bias-corrected Adam update of the given rows.

    With ``rows=None`` every row is updated with the dense ``grads``.
    Untouched rows keep both their values and their moment state; bias
    correction uses each row's own step count.
    """
    b1, b2 = betas
    if rows is None:
        rows = np.arange(params.shape[0])
    grads = np.asarray(grads).reshape(len(rows), *params.shape[1:])
    if len(rows) == 0:
        return
    state.t[rows] += 1
    t = state.t[rows].reshape(-1, *([1] * (params.ndim - 1)))
    m = b1 * state.m[rows] + (1.0 - b1) * grads
    v = b2 * state.v[rows] + (1.0 - b2) * (grads * grads)
    state.m[rows] = m
    state.v[rows] = v
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    params[rows] -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(params.dtype)


# -- training loop ------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 1000
    steps: int = 1000
    learning_rate: float = 5e-5
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    eval_every: int = 0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be >= 0")


@dataclass
class TrainResult:
    best_model: EmbeddingModel
    final_model: EmbeddingModel
    log_lines: list[str]
    losses: list[LossBreakdown]
    evals: list[tuple[int, object]]
    best_step: Optional[int] = None
    best_mrr: Optional[float] = None


def format_step_line(step: int, lb: LossBreakdown) -> str:
    return f"{step}\t{lb.total:.10g}\t{lb.positive_term:.10g}\t{lb.negative_term:.10g}"


def format_eval_line(step: int, report) -> str:
    return (
        f"eval\t{step}\t{report.mrr:.10g}\t{report.hits[1]:.10g}"
        f"\t{report.hits[3]:.10g}\t{report.hits[10]:.10g}"
    )


def train(
    store: TripleStore,
    model: EmbeddingModel,
    config: TrainConfig,
    neighborhood: Optional[KHopNeighborhood] = None,
    metrics_out: Optional[TextIO] = None,
    evaluator: Optional[Callable] = None,
    progress: Optional[Callable[[int, LossBreakdown], None]] = None,
) -> TrainResult:
    """Optimise ``model`` in place for ``config.steps`` Adam steps.

    Each step corrupts the positive batch on the head side and then on the
    tail side. Validation MRR is measured every ``eval_every`` steps and at
    the last step; the best-scoring parameters are returned as
    ``best_model``. ``evaluator(model)`` defaults to filtered evaluation on
    the valid split.
    """
    cfg = config
    scfg = cfg.sampler
    if scfg.uses_neighborhood != (neighborhood is not None):
        raise ConfigError(
            "a neighborhood must be given exactly when the sampler is a k-hop variant"
        )
    if len(store.train) == 0:
        raise ContractViolation("cannot train on an empty train split")
    if model.num_entities != store.num_entities or model.num_relations != store.num_relations:
        raise ContractViolation("model and store vocabularies differ in size")

    if evaluator is None and len(store.valid):
        from .evaluation import evaluate

        def evaluator(m):
            return evaluate(m, store, "valid")

    sampler = Sampler(store, scfg, neighborhood)
    shuffle_rng = np.random.default_rng([cfg.seed, 0x5A45])
    states = {name: AdamState.zeros_like(p) for name, p in model.params.items()}
    betas = (cfg.beta1, cfg.beta2)
    train_arr = store.train
    order = shuffle_rng.permutation(len(train_arr))
    cursor = 0

    lines: list[str] = []
    losses: list[LossBreakdown] = []
    evals: list[tuple[int, object]] = []
    best_model, best_step, best_mrr = None, None, None

    def emit(line):
        lines.append(line)
        if metrics_out is not None:
            metrics_out.write(line + "\n")

    for step in range(1, cfg.steps + 1):
        if cursor >= len(order):
            shuffle_rng.shuffle(order)
            cursor = 0
        batch = train_arr[order[cursor : cursor + cfg.batch_size]]
        cursor += cfg.batch_size

        negs = [sampler.sample(batch, Side.HEAD), sampler.sample(batch, Side.TAIL)]
        try:
            lb, grads = batch_loss_and_grad(model, batch, negs, scfg.adversarial, scfg.adv_temperature)
        except NumericError as exc:
            raise NumericError(f"step {step}: {exc}") from exc
        if not np.isfinite(lb.total):
            raise NumericError(f"step {step}: non-finite loss")
        for name, param in model.params.items():
            g = grads[name]
            adam_step(param, g.values, states[name], cfg.learning_rate, betas, cfg.adam_eps, rows=g.rows)
        losses.append(lb)
        emit(format_step_line(step, lb))
        if progress is not None:
            progress(step, lb)

        due = step == cfg.steps or (cfg.eval_every and step % cfg.eval_every == 0)
        if due and evaluator is not None:
            report = evaluator(model)
            evals.append((step, report))
            emit(format_eval_line(step, report))
            log.info("step %d valid mrr %.4f", step, report.mrr)
            if best_mrr is None or report.mrr > best_mrr:
                best_mrr, best_step, best_model = report.mrr, step, model.copy()

    if best_model is None:
        best_model = model.copy()
    return TrainResult(best_model, model, lines, losses, evals, best_step, best_mrr)

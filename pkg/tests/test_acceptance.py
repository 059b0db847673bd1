"""Acceptance gate: one PASS/FAIL line per criterion.

Criteria that need the public benchmarks read them from
``$SANS_DATA_DIR/<name>/{train,valid,test}.txt``. When the data is absent the
criterion fails with an explanation instead of being skipped.
"""

import io
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import benchmark_dir, record_acceptance
from sanskg.config import RunConfig
from sanskg.datasets import DATA_ROOT
from sanskg.evaluation import evaluate, filtered_ranks, side_ranks
from sanskg.graph import TripleStore, load_dataset
from sanskg.models import EmbeddingModel, init_model
from sanskg.neighborhood import build_exact_khop, build_rw_khop, fill_percentage
from sanskg.sampling import Sampler, SamplerConfig, adversarial_weights
from sanskg.training import TrainConfig, loss, train
from test_evaluation import _integer_model, _oracle_ranks, _toy_store
from test_training import gradient_check

CONFIGS = Path(__file__).parent.parent / "configs"

FILL_TARGETS = {
    "WN18RR": {2: 0.16, 3: 0.65, 4: 2.76, 5: 8.67},
    "WN18": {2: 0.19, 3: 0.75, 4: 3.22, 5: 10.2},
}
FB_TARGET = {2: 34.0}


def _missing(criterion, names):
    msg = (
        f"benchmark data not found ({', '.join(names)}); set SANS_DATA_DIR to a directory "
        "holding <name>/train.txt, valid.txt, test.txt"
    )
    record_acceptance(criterion, False, msg)
    pytest.fail(msg)


def _random_graphs(count, seed):
    rng = np.random.default_rng(seed)
    return [oracles.random_graph(rng) + (int(rng.integers(1, 6)),) for _ in range(count)]


def _store(n, triples):
    return TripleStore.from_ids(n, 3, np.array(triples, dtype=np.int64).reshape(-1, 3))


def _fill_row(store, ks, symmetric):
    return {k: fill_percentage(build_exact_khop(store, k, symmetric=symmetric), store.num_entities).percent
            for k in ks}


def _within(got, want, rel=0.25):
    return all(abs(got[k] - want[k]) <= rel * want[k] for k in want)


def test_c1_fill_table():
    name = "C1 fill-table reproduction"
    roots = {ds: benchmark_dir(ds) for ds in FILL_TARGETS}
    absent = [ds for ds, root in roots.items() if root is None]
    if absent:
        _missing(name, absent)
    details, ok = [], True
    for ds, targets in FILL_TARGETS.items():
        store = load_dataset(roots[ds])
        sym = _fill_row(store, targets, True)
        good = _within(sym, targets)
        note = "symmetrized"
        if not good:
            directed = _fill_row(store, targets, False)
            if _within(directed, targets):
                good, sym, note = True, directed, "directed"
        ok &= good
        details.append(f"{ds} ({note}) " + " ".join(f"k{k}={sym[k]:.3f}%" for k in targets))
    fb = benchmark_dir("FB15K-237")
    if fb is not None:
        store = load_dataset(fb)
        try:
            got = _fill_row(store, FB_TARGET, True)
            ok &= _within(got, FB_TARGET)
            details.append(f"FB15K-237 k2={got[2]:.2f}%")
        except MemoryError:
            details.append("FB15K-237 k2 exceeds memory budget (exempt)")
    record_acceptance(name, ok, "; ".join(details))
    assert ok


def test_c2_exact_matches_dense_oracle():
    graphs = _random_graphs(200, seed=2024)
    mismatches = 0
    for n, triples, k in graphs:
        want = oracles.dense_khop(n, [(h, t) for h, _, t in triples], k)
        store = _store(n, triples)
        for method in ("product", "frontier"):
            nb = build_exact_khop(store, k, method=method)
            got = np.zeros((n, n), dtype=bool)
            for e in range(n):
                got[e, nb.row_members(e)] = True
            mismatches += not np.array_equal(got, want)
    ok = mismatches == 0
    record_acceptance("C2 exact/oracle equivalence", ok, f"{len(graphs)} graphs x 2 methods, {mismatches} mismatches")
    assert ok


def test_c3_walk_soundness():
    graphs = _random_graphs(200, seed=2024)
    violations = 0
    for n, triples, k in graphs:
        edges = [(h, t) for h, _, t in triples]
        balls = [oracles.bfs_within(n, edges, e, k) for e in range(n)]
        store = _store(n, triples)
        for seed in range(20):
            nb = build_rw_khop(store, k, omega=5, seed=seed)
            violations += sum(not set(nb.row_members(e).tolist()) <= balls[e] for e in range(n))
    star = TripleStore.from_labeled([("c", "r", f"l{i}") for i in range(1, 5)])
    omega = 4000
    row = dict(build_rw_khop(star, 1, omega, seed=0).row(star.entities.lookup("c")))
    sd = np.sqrt(omega * 0.25 * 0.75)
    z = max(abs(row.get(star.entities.lookup(f"l{i}"), 0) - omega / 4) / sd for i in range(1, 5))
    ok = violations == 0 and z <= 5 and sum(row.values()) == omega
    record_acceptance(
        "C3 random-walk soundness", ok, f"{violations} support violations over 200x20 builds; star max |z| = {z:.2f}"
    )
    assert ok


def test_c4_gradients():
    worst = {(kind, adv): gradient_check(kind, adv, instances=100, seed=100 + i)
             for i, (kind, adv) in enumerate((k, a) for k in ("transe", "distmult", "rotate") for a in (False, True))}
    ok = max(worst.values()) <= 1e-4
    detail = ", ".join(f"{k}{'+adv' if a else ''}={v:.1e}" for (k, a), v in worst.items())
    record_acceptance("C4 gradient correctness", ok, f"worst relative error {detail}")
    assert ok


def test_c5_loss_identities():
    g = 4.0
    m = EmbeddingModel("transe", np.array([[0.0], [g], [-g]]), np.array([[0.0]]), g, 1)
    margin_err = abs(loss(m, (0, 0, 1), [2, 2, 2], np.full(3, 1 / 3)).total - 2 * np.log(2))
    rng = np.random.default_rng(0)
    scores = rng.normal(scale=20, size=(500, 64))
    uniform_err = np.abs(adversarial_weights(scores, 0.0) - 1 / 64).max()
    sums_err = max(np.abs(adversarial_weights(scores, t).sum(1) - 1).max() for t in (0.5, 1.0, 3.0))
    ok = margin_err <= 1e-12 and uniform_err <= 1e-15 and sums_err <= 1e-6
    record_acceptance(
        "C5 loss identities", ok,
        f"|L - 2log2| = {margin_err:.1e}; |w(T=0) - 1/n| = {uniform_err:.1e}; |sum w - 1| = {sums_err:.1e}",
    )
    assert ok


def test_c6_evaluation_oracle():
    rng = np.random.default_rng(6)
    queries = mismatches = 0
    for trial in range(60):
        ne = int(rng.integers(3, 11))
        store = _toy_store(rng, ne=ne, n_test=5)
        if trial % 3 == 2:
            model = init_model("rotate", ne, 2, 3, 6.0, seed=trial)
            model.entity[1] = model.entity[0]  # forced tie
        else:
            model = _integer_model(["transe", "distmult"][trial % 3], rng, ne, 2)
        rep = evaluate(model, store, "test")
        want = _oracle_ranks(model, store, "test")
        for side in ("head", "tail"):
            got = side_ranks(model, store, store.test, side)
            mismatches += int(np.sum(np.abs(got - np.array(want[side])) > 1e-12))
            queries += len(got)
        assert rep.num_queries == 2 * len(store.test)
    transform_bad = 0
    for _ in range(200):
        d = rng.integers(-4, 5, size=(1, 9)).astype(float)
        t = int(rng.integers(9))
        f = [np.array(sorted(rng.choice(9, size=int(rng.integers(0, 4)), replace=False)), dtype=int)]
        base = filtered_ranks(d, [t], f)
        transform_bad += sum(not np.array_equal(filtered_ranks(fn(d), [t], f), base)
                             for fn in (np.exp, lambda x: 2 * x - 7, lambda x: x**3))
    ok = mismatches == 0 and transform_bad == 0
    record_acceptance(
        "C6 evaluation oracle", ok,
        f"{queries} ranked queries, {mismatches} mismatches; {transform_bad} monotone-transform failures",
    )
    assert ok


def _smoke_run(cfg_name, nb=None):
    cfg = RunConfig.from_file(CONFIGS / cfg_name)
    store = load_dataset(DATA_ROOT / "synthetic50")
    model = init_model(cfg.model, store.num_entities, store.num_relations, cfg.dim, cfg.gamma,
                       seed=cfg.seed, dtype=cfg.np_dtype)
    untrained = evaluate(model, store, "valid").mrr
    out = io.StringIO()
    res = train(store, model, cfg.train_config(), nb, metrics_out=out)
    return store, untrained, res.best_mrr, out.getvalue()


def test_c7_learning_smoke():
    store = load_dataset(DATA_ROOT / "synthetic50")
    nb = build_exact_khop(store, 2)
    baseline = 2 / (store.num_entities + 1)
    _, untrained, sans, log_a = _smoke_run("synthetic_transe_sans.cfg", nb)
    _, _, _, log_b = _smoke_run("synthetic_transe_sans.cfg", nb)
    _, _, uni, log_c = _smoke_run("synthetic_transe_uniform.cfg")
    _, _, _, log_d = _smoke_run("synthetic_transe_uniform.cfg")
    ok = sans > baseline and sans > untrained and uni > untrained and log_a == log_b and log_c == log_d
    record_acceptance(
        "C7 end-to-end learning smoke", ok,
        f"valid MRR SANS k=2 {sans:.4f}, uniform {uni:.4f}, untrained {untrained:.4f}, "
        f"tied baseline {baseline:.4f}, deterministic={log_a == log_b and log_c == log_d}",
    )
    assert ok


@pytest.mark.benchmark
def test_c8_directional_comparison():
    name = "C8 WN18RR Uniform SANS vs uniform (TransE d=50)"
    root = benchmark_dir("WN18RR")
    if root is None:
        _missing(name, ["WN18RR"])
    store = load_dataset(root)
    nb = build_exact_khop(store, 2)
    mrr = {"uniform": [], "sans": []}
    for seed in range(3):
        for variant in mrr:
            model = init_model("transe", store.num_entities, store.num_relations, 50, 9.0, seed=seed,
                               dtype=np.float32)
            cfg = TrainConfig(batch_size=1000, steps=20_000, learning_rate=1e-3, eval_every=5000, seed=seed,
                              sampler=SamplerConfig(variant=variant, n=64, k=2, seed=seed + 1))
            res = train(store, model, cfg, nb if variant == "sans" else None)
            mrr[variant].append(evaluate(res.best_model, store, "test").mrr)
    sans, uni = float(np.mean(mrr["sans"])), float(np.mean(mrr["uniform"]))
    ok = sans >= uni - 0.005
    record_acceptance(name, ok, f"test MRR mean over 3 seeds: SANS {sans:.4f}, uniform {uni:.4f}")
    assert ok


@pytest.mark.benchmark
def test_c9_self_adversarial_restriction():
    name = "C9 Self-Adv. SANS draws stay in k-hop rows (WN18RR, 1e5 draws)"
    root = benchmark_dir("WN18RR")
    if root is None:
        _missing(name, ["WN18RR"])
    store = load_dataset(root)
    nb = build_exact_khop(store, 2)
    sampler = Sampler(store, SamplerConfig(variant="sans", adversarial=True, n=64, k=2, seed=9), nb)
    rng = np.random.default_rng(9)
    drawn = outside = 0
    while drawn < 100_000:
        pos = store.train[rng.integers(len(store.train), size=200)]
        for side in ("head", "tail"):
            batch = sampler.sample(pos, side)
            anchors = pos[:, 2] if side == "head" else pos[:, 0]
            keep = ~batch.fell_back
            outside += int((~nb.member_mask(anchors[keep, None], batch.candidates[keep])).sum())
            drawn += int(keep.sum()) * batch.candidates.shape[1]
    ok = outside == 0
    record_acceptance(name, ok, f"{drawn} non-fallback draws, {outside} outside their row")
    assert ok

"""Command-line entry point: ``sanskg <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import difflib
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .datasets import resolve_dataset
from .errors import ConfigError, SansError
from .evaluation import evaluate
from .graph import load_dataset, write_dicts
from .models import init_model, load_checkpoint, save_checkpoint
from .neighborhood import (
    DEFAULT_MAX_ENTRIES,
    Kind,
    build_exact_khop,
    build_rw_khop,
    fill_percentage,
    load_neighborhood,
    save_neighborhood,
)
from .training import train

log = logging.getLogger("sanskg")


def _parse_ks(text: str) -> list[int]:
    ks = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            ks.extend(range(int(a), int(b) + 1))
        else:
            ks.append(int(part))
    return ks


# -- commands -----------------------------------------------------------------


def cmd_preprocess(args) -> int:
    store = load_dataset(resolve_dataset(args.dataset))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.rw:
        nb = build_rw_khop(store, args.k, args.omega, seed=args.seed, symmetric=not args.directed)
    else:
        nb = build_exact_khop(
            store, args.k, symmetric=not args.directed, method=args.method,
            max_entries=args.max_entries, threads=args.threads,
        )
    elapsed = time.perf_counter() - t0
    save_neighborhood(nb, out)
    rep = fill_percentage(nb, store.num_entities)
    kind = f"walks omega={nb.omega} seed={nb.seed}" if nb.kind is Kind.WALKS else "exact"
    print(f"dataset\t{args.dataset}\nkind\t{kind}\nk\t{rep.k}\nentities\t{store.num_entities}")
    print(f"nonzero\t{nb.nnz}\nfill_percent\t{rep.percent:.4f}\nseconds\t{elapsed:.2f}\nwritten\t{out}")
    return 0


def cmd_fill(args) -> int:
    from .plotting import plot_fill

    store = load_dataset(resolve_dataset(args.dataset))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(out / "fill.tsv", "w", encoding="utf-8") as fh:
        fh.write("k\tnonzero\tfill_percent\n")
        for k in _parse_ks(args.ks):
            nb = build_exact_khop(
                store, k, symmetric=not args.directed, method=args.method,
                max_entries=args.max_entries, threads=args.threads,
            )
            rep = fill_percentage(nb, store.num_entities)
            rows.append((k, rep.percent))
            line = f"{k}\t{nb.nnz}\t{rep.percent:.4f}"
            fh.write(line + "\n")
            print(line, flush=True)
    plot_fill(rows, out / "fill.png", title=str(args.dataset))
    print(f"written\t{out / 'fill.tsv'}\t{out / 'fill.png'}")
    return 0


def cmd_train(args) -> int:
    overrides = list(args.set or [])
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    cfg = RunConfig.from_file(args.config, overrides).resolved()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.effective").write_text(cfg.dump(), encoding="utf-8")

    store = load_dataset(cfg.dataset)
    if len(store.valid) == 0:
        raise ConfigError("training needs a nonempty valid split for checkpoint selection")
    nb = load_neighborhood(cfg.neighborhood) if cfg.neighborhood and cfg.sampler != "uniform" else None
    if nb is not None and nb.num_entities != store.num_entities:
        raise ConfigError("neighborhood file was built for a different dataset")
    model = init_model(
        cfg.model, store.num_entities, store.num_relations, cfg.dim, cfg.gamma,
        seed=cfg.seed, norm=cfg.transe_norm, dtype=cfg.np_dtype,
    )
    write_dicts(store, out)
    save_checkpoint(model, out / "init.ckpt")
    tcfg = cfg.train_config()

    def progress(step, lb):
        if step % max(1, cfg.steps // 10) == 0:
            log.info("step %d loss %.5f", step, lb.total)

    with open(out / "metrics.tsv", "w", encoding="utf-8") as fh:
        result = train(store, model, tcfg, nb, metrics_out=fh, progress=progress)
    save_checkpoint(result.best_model, out / "best.ckpt")
    save_checkpoint(result.final_model, out / "final.ckpt")
    report = evaluate(result.best_model, store, "valid")
    title = f"valid (best step {result.best_step}, {tcfg.sampler.label})"
    (out / "valid_report.txt").write_text(report.to_table(title), encoding="utf-8")
    (out / "valid_report.kv").write_text(
        f"best_step={result.best_step}\n" + report.to_keyvalue(), encoding="utf-8"
    )
    print(report.to_table(title), end="")
    if not args.no_plots:
        from .plotting import plot_training

        plot_training(out / "metrics.tsv", out)
    print(f"written\t{out}")
    return 0


def cmd_eval(args) -> int:
    store = load_dataset(resolve_dataset(args.dataset))
    model = load_checkpoint(args.checkpoint)
    splits = ["valid", "test"] if args.split == "both" else [args.split]
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for split in splits:
        report = evaluate(model, store, split, filtered=not args.raw)
        print(report.to_table(f"{split} ({'raw' if args.raw else 'filtered'})"), end="")
        if out:
            (out / f"{split}_report.kv").write_text(report.to_keyvalue(), encoding="utf-8")
            (out / f"{split}_report.txt").write_text(report.to_table(split), encoding="utf-8")
    return 0


def inspect_candidates(store, nb, anchor: str, n: int, seed: int = 0):
    """Uniform and k-hop candidates for ``anchor`` (names, counts or None)."""
    if anchor not in store.entities:
        close = difflib.get_close_matches(anchor, store.entities.names, n=5)
        hint = f"; did you mean: {', '.join(close)}" if close else ""
        raise ConfigError(f"unknown entity {anchor!r}{hint}")
    a = store.entities.lookup(anchor)
    rng = np.random.default_rng(seed)
    others = np.delete(np.arange(store.num_entities), a)
    uniform = rng.choice(others, size=min(n, len(others)), replace=False)
    members, counts = nb.row_members(a), nb.row_counts(a)
    if len(members) == 0:
        sans = []
    else:
        p = counts / counts.sum()
        pick = rng.choice(len(members), size=min(n, len(members)), replace=False, p=p)
        sans = [(int(members[i]), int(counts[i]) if nb.kind is Kind.WALKS else None) for i in pick]
    return a, [int(u) for u in uniform], sans


def cmd_inspect(args) -> int:
    store = load_dataset(resolve_dataset(args.dataset))
    nb = load_neighborhood(args.neighborhood)
    if nb.num_entities != store.num_entities:
        raise ConfigError("neighborhood file was built for a different dataset")
    a, uniform, sans = inspect_candidates(store, nb, args.anchor, args.n, args.seed)
    names = store.entities.names
    label = f"SANS k={nb.k}" + (f" (walks, omega={nb.omega})" if nb.kind is Kind.WALKS else "")
    print(f"anchor\t{args.anchor}\trow_size\t{len(nb.row_members(a))}")
    if not sans:
        print("notice\tempty k-hop row: SANS would fall back to uniform sampling for this anchor")
    print(f"Uniform\t{label}")
    for i in range(max(len(uniform), len(sans))):
        left = names[uniform[i]] if i < len(uniform) else ""
        if i < len(sans):
            e, c = sans[i]
            right = names[e] if c is None else f"{names[e]} ({c})"
        else:
            right = ""
        print(f"{left}\t{right}")
    return 0


def cmd_report(args) -> int:
    from .plotting import plot_training, read_metrics_log

    out = Path(args.out) if args.out else Path(args.metrics).parent
    paths = plot_training(args.metrics, out, window=args.window)
    steps, evals = read_metrics_log(args.metrics)
    with open(out / "summary.tsv", "w", encoding="utf-8") as fh:
        fh.write("key\tvalue\n")
        fh.write(f"steps\t{len(steps)}\n")
        if steps:
            fh.write(f"first_loss\t{steps[0][1]:.6g}\nlast_loss\t{steps[-1][1]:.6g}\n")
        if evals:
            best = max(evals, key=lambda e: e[1])
            fh.write(f"best_step\t{best[0]}\nbest_mrr\t{best[1]:.6g}\n")
    for p in paths + [out / "summary.tsv"]:
        print(f"written\t{p}")
    return 0


# -- wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sanskg", description="Structure-aware negative sampling toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add_build_args(sp):
        sp.add_argument("--directed", action="store_true", help="do not symmetrize the adjacency")
        sp.add_argument("--method", choices=["product", "frontier"], default="product")
        sp.add_argument("--max-entries", type=int, default=DEFAULT_MAX_ENTRIES)
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("preprocess", help="build and save a k-hop neighborhood")
    sp.add_argument("dataset")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--rw", action="store_true", help="approximate with random walks")
    sp.add_argument("--omega", type=int, default=3000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="neighborhood.khop")
    add_build_args(sp)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("fill", help="fill percentage sweep over k with a figure")
    sp.add_argument("dataset")
    sp.add_argument("--ks", default="1-5")
    sp.add_argument("--out", default="fill")
    add_build_args(sp)
    sp.set_defaults(func=cmd_fill)

    sp = sub.add_parser("train", help="train from a key=value config file")
    sp.add_argument("config")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="filtered evaluation of a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("dataset")
    sp.add_argument("--split", choices=["valid", "test", "both"], default="test")
    sp.add_argument("--out")
    sp.add_argument("--raw", action="store_true", help="unfiltered ranking (debugging)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("inspect", help="list k-hop and uniform candidates for an anchor")
    sp.add_argument("dataset")
    sp.add_argument("neighborhood")
    sp.add_argument("anchor")
    sp.add_argument("--n", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("report", help="render figures and a summary from a metrics log")
    sp.add_argument("metrics")
    sp.add_argument("--out")
    sp.add_argument("--window", type=int, default=50)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s"
    )
    try:
        return args.func(args)
    except SansError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

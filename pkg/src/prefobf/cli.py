"""Command-line entry point: ``prefobf <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attacker import AttackConfig, run_attack_cv
from .dataset import (
    k_core_filter,
    load_interactions,
    load_many,
    load_user_attributes,
    write_id_maps,
    write_interactions,
    write_user_attributes,
)
from .harness import SyntheticConfig, generate_synthetic, load_experiment_config, run_experiment
from .obfuscation import SAMPLERS, STRATEGIES, ObfuscationConfig, obfuscate_dataset, write_audit
from .recommender import TrainConfig, evaluate_model, save_model, train_bpr
from .stereotype import AGGREGATORS, GAMMA_MODES, StereotypeTable, compute_gamma, emit_distributions, summarize, user_scores

logger = logging.getLogger("prefobf")


def _load(args):
    dataset = load_interactions(args.interactions, args.delimiter)
    if getattr(args, "k_core", 0):
        dataset = k_core_filter(dataset, args.k_core)
    partition = load_user_attributes(args.attributes, dataset)
    return dataset, partition


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(
        users_per_group=args.users_per_group, n_items=args.items, signature=args.signature,
        common=args.common, pool_size=args.pool_size, exclusive=args.exclusive,
        popularity=args.popularity, seed=args.seed,
    )
    dataset, partition = generate_synthetic(cfg)
    out = Path(args.out)
    write_interactions(dataset, out / "interactions.csv")
    write_user_attributes(dataset, partition, out / "attributes.csv")
    print(f"wrote {len(dataset)} interactions for {dataset.n_users} users and {dataset.n_items} items to {out}")
    return 0


def cmd_stats(args) -> int:
    dataset, partition = _load(args)
    table = StereotypeTable.build(dataset, partition)
    scores = user_scores(dataset, partition, table, args.aggregator)
    gamma = compute_gamma(scores, args.gamma_mode)
    emit_distributions(table, scores, args.out, gamma, args.bins, dataset.users)
    sizes = partition.sizes
    print(f"users {dataset.n_users} ({partition.labels[0]}={sizes[0]}, {partition.labels[1]}={sizes[1]}), "
          f"items {dataset.n_items}, interactions {len(dataset)}")
    for key, value in summarize(table, scores, gamma).items():
        print(f"{key}: {value}")
    return 0


def cmd_obfuscate(args) -> int:
    dataset, partition = _load(args)
    cfg = ObfuscationConfig(args.strategy, args.sampler, args.ratio, args.weight, args.aggregator,
                            args.gamma_mode, args.seed)
    outcome = obfuscate_dataset(dataset, partition, cfg, workers=args.workers)
    out = Path(args.out)
    write_interactions(outcome.dataset, out)
    write_id_maps(outcome.dataset, out.parent, prefix=out.stem + "_")
    write_audit(outcome, args.audit or out.with_name(out.stem + "_audit.csv"))
    print(f"gamma {outcome.gamma:.6f}; selected {outcome.n_selected}/{dataset.n_users} users; "
          f"added {outcome.n_added}, removed {outcome.n_removed} items")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, patience=args.patience,
                       seed=args.seed, dim=args.dim, reg=args.reg)


def cmd_train_rec(args) -> int:
    paths = [args.train, args.validation] + ([args.test] if args.test else [])
    loaded = load_many(paths, args.delimiter)
    train, val = loaded[0], loaded[1]
    model = train_bpr(train, val, _train_config(args))
    save_model(model, args.out)
    print(f"best epoch {model.best_epoch}; validation NDCG@10 {evaluate_model(model, val, train):.4f}")
    if args.test:
        seen = train.with_pairs(np.concatenate([train.pairs, val.pairs]))
        print(f"test NDCG@10 {evaluate_model(model, loaded[2], seen):.4f}")
    return 0


def cmd_attack(args) -> int:
    dataset, partition = _load(args)
    cfg = AttackConfig(hidden=args.hidden, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       seed=args.seed)
    result = run_attack_cv(dataset, partition, cfg, args.folds, args.seed)
    for f, bacc in enumerate(result.per_fold):
        print(f"fold {f}: BAcc {bacc:.4f}")
    print(f"mean BAcc {result.mean:.4f}")
    if args.out:
        path = Path(args.out)
        new = not path.exists()
        with path.open("a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(["interactions", "hidden", "epochs", "seed", "folds", "bacc_mean", "bacc_folds"])
            w.writerow([args.interactions, args.hidden, args.epochs, args.seed, args.folds, repr(result.mean),
                        " ".join(map(repr, result.per_fold))])
    return 0


def cmd_experiment(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.out:
        cfg = replace(cfg, out=args.out)
    report = run_experiment(cfg)
    for row in report.rows:
        status = "" if row.status == "ok" else f"  FAILED {row.error}"
        print(f"{row.label:45s} BAcc {row.bacc_mean:.4f}  NDCG@10 {row.ndcg:.4f}{status}")
    return 1 if report.failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefobf", description="Stereotype-driven obfuscation of interaction data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, attributes=True):
        p.add_argument("--interactions", required=True)
        if attributes:
            p.add_argument("--attributes", required=True)
        p.add_argument("--delimiter", default=None, help="force ',' or '\\t' (default: sniff the header)")
        p.add_argument("--k-core", type=int, default=0, help="apply k-core filtering first (0 = off)")

    p = sub.add_parser("synth", help="generate a planted-stereotype dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--users-per-group", type=int, default=150)
    p.add_argument("--items", type=int, default=600)
    p.add_argument("--signature", type=int, default=40)
    p.add_argument("--common", type=int, default=40)
    p.add_argument("--pool-size", type=int, default=220)
    p.add_argument("--exclusive", type=int, default=30)
    p.add_argument("--popularity", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="stereotypicality distributions and threshold")
    data_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--aggregator", choices=AGGREGATORS, default="mean")
    p.add_argument("--gamma-mode", choices=GAMMA_MODES, default="mean")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("obfuscate", help="rewrite highly stereotypical user profiles")
    data_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--audit", default=None)
    p.add_argument("--strategy", choices=STRATEGIES, default="removal")
    p.add_argument("--sampler", type=str.lower, choices=SAMPLERS, default="sbsampling")
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--aggregator", choices=AGGREGATORS, default="mean")
    p.add_argument("--gamma-mode", choices=GAMMA_MODES, default="mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("train-rec", help="train BPR-MF and write a checkpoint")
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--delimiter", default=None)
    p.add_argument("--out", required=True)
    defaults = TrainConfig()
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--lr", type=float, default=defaults.lr)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--patience", type=int, default=defaults.patience)
    p.add_argument("--dim", type=int, default=defaults.dim)
    p.add_argument("--reg", type=float, default=defaults.reg)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.set_defaults(func=cmd_train_rec)

    p = sub.add_parser("attack", help="cross-validated attribute-inference attack")
    data_args(p)
    adefaults = AttackConfig()
    p.add_argument("--hidden", type=int, default=adefaults.hidden)
    p.add_argument("--epochs", type=int, default=adefaults.epochs)
    p.add_argument("--batch-size", type=int, default=adefaults.batch_size)
    p.add_argument("--lr", type=float, default=adefaults.lr)
    p.add_argument("--seed", type=int, default=adefaults.seed)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", default=None, help="append a results row to this CSV")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("experiment", help="run a full obfuscation grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

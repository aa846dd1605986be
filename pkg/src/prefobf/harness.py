"""End-to-end accuracy/privacy experiments over obfuscation grids.

Pipeline per dataset: k-core filter, carve a per-user test slice, then for the
untouched data and every grid cell: obfuscate the remaining train+validation
interactions, re-split them into train and validation, fit BPR-MF, score
NDCG@10 on the untouched test slice and run the cross-validated attacker on
the (obfuscated) train+validation vectors.
"""

from __future__ import annotations

import csv
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .attacker import AttackConfig, run_attack_cv
from .dataset import (
    GroupPartition,
    InteractionDataset,
    SplitSpec,
    k_core_filter,
    load_interactions,
    load_user_attributes,
    split_per_user,
    write_id_maps,
    write_interactions,
    write_user_attributes,
)
from .obfuscation import ObfuscationConfig, obfuscate_dataset, write_audit
from .recommender import TrainConfig, evaluate_model, save_model, train_bpr
from .stereotype import StereotypeTable, compute_gamma, emit_distributions, user_scores

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Synthetic planted-stereotype data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Two overlapping signature pools plus a common pool.

    Item layout: group 0's signature pool is ``[0, pool_size)``, group 1's is
    ``[exclusive, pool_size + exclusive)``; the first/last ``exclusive`` items
    of that span are consumed by one group only. Remaining items form the
    common pool.
    """

    users_per_group: int = 150
    n_items: int = 600
    signature: int = 40
    common: int = 40
    pool_size: int = 220
    exclusive: int = 30
    popularity: float = 1.0
    seed: int = 0
    labels: tuple[str, str] = ("f", "m")

    def __post_init__(self):
        if not 0 <= self.exclusive <= self.pool_size:
            raise ValueError("exclusive must lie in [0, pool_size]")
        n_common = self.n_items - self.pool_size - self.exclusive
        if n_common < self.common or self.pool_size < self.signature:
            raise ValueError("pools are too small for the requested draws")


def generate_synthetic(cfg: SyntheticConfig = SyntheticConfig()) -> tuple[InteractionDataset, GroupPartition]:
    rng = np.random.default_rng(cfg.seed)
    # one global popularity order so shared items are equally attractive to both groups
    rank = rng.permutation(cfg.n_items)
    weight = (rank + 1.0) ** -cfg.popularity
    pools = (
        np.arange(0, cfg.pool_size),
        np.arange(cfg.exclusive, cfg.pool_size + cfg.exclusive),
    )
    common = np.arange(cfg.pool_size + cfg.exclusive, cfg.n_items)

    def draw(pool, k):
        p = weight[pool] / weight[pool].sum()
        return rng.choice(pool, size=k, replace=False, p=p)

    profiles, groups = [], []
    for g in (0, 1):
        for _ in range(cfg.users_per_group):
            profiles.append(np.concatenate([draw(pools[g], cfg.signature), draw(common, cfg.common)]))
            groups.append(g)
    n_users = len(profiles)
    users = tuple(f"u{u:05d}" for u in range(n_users))
    items = tuple(f"i{i:05d}" for i in range(cfg.n_items))
    return InteractionDataset.from_profiles(users, items, profiles), GroupPartition(cfg.labels, np.array(groups))


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    interactions: str | None = None
    attributes: str | None = None
    out: str = "experiment_out"
    name: str = "dataset"
    core_k: int = 5
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    test_seed: int = 0
    val_seed: int = 1
    strategies: tuple[str, ...] = ("imputation", "removal", "weighted")
    samplers: tuple[str, ...] = ("sbsampling", "topstereo", "random")
    ratios: tuple[float, ...] = (0.1,)
    aggregators: tuple[str, ...] = ("mean",)
    weight: float = 0.5
    gamma_mode: str = "mean"
    obfuscation_seed: int = 0
    folds: int = 5
    attack_seed: int = 0
    workers: int = 1
    save_artifacts: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)

    def __post_init__(self):
        if not (self.strategies and self.samplers and self.ratios and self.aggregators):
            raise ValueError("the obfuscation grid is empty")
        for cell in self.grid():
            cell_config(self, *cell)  # validates every cell up front
        SplitSpec(self.test_fraction, self.test_seed)
        SplitSpec(self.val_fraction, self.val_seed)
        if self.folds < 2:
            raise ValueError("folds must be >= 2")

    def grid(self) -> list[tuple[str, str, float, str]]:
        return list(itertools.product(self.strategies, self.samplers, self.ratios, self.aggregators))


def cell_config(cfg: ExperimentConfig, strategy, sampler, ratio, aggregator) -> ObfuscationConfig:
    return ObfuscationConfig(strategy, sampler, ratio, cfg.weight, aggregator, cfg.gamma_mode, cfg.obfuscation_seed)


_LIST_KEYS = {"strategies": str, "samplers": str, "ratios": float, "aggregators": str}


def _coerce(kind, raw: str):
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return kind(raw.strip())


def load_experiment_config(path) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    List keys (strategies, samplers, ratios, aggregators) take comma-separated
    values. Recommender and attacker settings use ``train.<field>`` and
    ``attack.<field>``. Relative paths resolve against the file's directory.
    """
    path = Path(path)
    top: dict[str, object] = {}
    sub: dict[str, dict[str, object]] = {"train": {}, "attack": {}}
    top_types = {f.name: f.type for f in fields(ExperimentConfig)}
    sub_types = {
        "train": {f.name: f.type for f in fields(TrainConfig)},
        "attack": {f.name: f.type for f in fields(AttackConfig)},
    }
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
            if section not in sub or name not in sub_types[section]:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            kind = {"int": int, "float": float, "str": str}[sub_types[section][name]]
            sub[section][name] = _coerce(kind, value)
        elif key in _LIST_KEYS:
            top[key] = tuple(_coerce(_LIST_KEYS[key], v) for v in value.split(",") if v.strip())
        elif key in top_types and key not in sub:
            kind = {"int": int, "float": float, "bool": bool}.get(top_types[key], str)
            top[key] = _coerce(kind, value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    for key in ("interactions", "attributes", "out"):
        if key in top and not Path(str(top[key])).is_absolute():
            top[key] = str(path.parent / str(top[key]))
    return ExperimentConfig(**top, train=TrainConfig(**sub["train"]), attack=AttackConfig(**sub["attack"]))


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------

REPORT_HEADER = (
    "dataset", "strategy", "sampler", "ratio", "aggregator", "weight",
    "bacc_mean", "bacc_folds", "ndcg_at_10", "users_selected", "items_added", "items_removed",
    "gamma", "obfuscation_seed", "split_seeds", "attack_seed", "train_seed", "status", "error",
)


@dataclass
class ReportRow:
    dataset: str
    strategy: str
    sampler: str
    ratio: float | None = None
    aggregator: str = ""
    weight: float | None = None
    bacc_mean: float = float("nan")
    bacc_folds: tuple[float, ...] = ()
    ndcg: float = float("nan")
    users_selected: int = 0
    items_added: int = 0
    items_removed: int = 0
    gamma: float = float("nan")
    seeds: dict = field(default_factory=dict)
    status: str = "ok"
    error: str = ""
    wall_clock: float = 0.0

    @property
    def is_original(self) -> bool:
        return self.strategy == "original"

    @property
    def label(self) -> str:
        if self.is_original:
            return "original"
        return f"{self.strategy}/{self.sampler}/rho={self.ratio}/{self.aggregator}"

    def as_record(self) -> list[str]:
        def num(x):
            return "" if x is None else repr(float(x))
        return [
            self.dataset, self.strategy, self.sampler, num(self.ratio), self.aggregator, num(self.weight),
            num(self.bacc_mean), " ".join(repr(float(b)) for b in self.bacc_folds), num(self.ndcg),
            str(self.users_selected), str(self.items_added), str(self.items_removed), num(self.gamma),
            str(self.seeds.get("obfuscation", "")), str(self.seeds.get("split", "")),
            str(self.seeds.get("attack", "")), str(self.seeds.get("train", "")), self.status, self.error,
        ]


@dataclass
class ExperimentReport:
    rows: list[ReportRow]

    @property
    def original(self) -> ReportRow:
        return next(r for r in self.rows if r.is_original)

    @property
    def failures(self) -> list[ReportRow]:
        return [r for r in self.rows if r.status != "ok"]

    def find(self, strategy, sampler, ratio=None, aggregator=None) -> ReportRow:
        for r in self.rows:
            if (r.strategy, r.sampler) == (strategy, sampler) and (ratio is None or r.ratio == ratio) \
                    and (aggregator is None or r.aggregator == aggregator):
                return r
        raise KeyError((strategy, sampler, ratio, aggregator))


def write_report(report: ExperimentReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for row in report.rows:
            w.writerow(row.as_record())


def write_timings(report: ExperimentReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "seconds"])
        for row in report.rows:
            w.writerow([row.label, f"{row.wall_clock:.3f}"])


def read_report(path) -> ExperimentReport:
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            def opt(key):
                return float(rec[key]) if rec[key] else None
            rows.append(ReportRow(
                dataset=rec["dataset"], strategy=rec["strategy"], sampler=rec["sampler"],
                ratio=opt("ratio"), aggregator=rec["aggregator"], weight=opt("weight"),
                bacc_mean=float(rec["bacc_mean"]), bacc_folds=tuple(float(b) for b in rec["bacc_folds"].split()),
                ndcg=float(rec["ndcg_at_10"]), users_selected=int(rec["users_selected"]),
                items_added=int(rec["items_added"]), items_removed=int(rec["items_removed"]),
                gamma=float(rec["gamma"]), status=rec["status"], error=rec["error"],
            ))
    return ExperimentReport(rows)


def emit_tradeoff(report: ExperimentReport, out_dir, by: str = "strategy") -> dict[str, Path]:
    """One ``ndcg,bacc,label`` series per strategy (or sampler), plus the baseline point."""
    if not report.rows:
        raise ValueError("report has no rows")
    if by not in ("strategy", "sampler"):
        raise ValueError("by must be 'strategy' or 'sampler'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    base = next((r for r in report.rows if r.is_original), None)
    if base is not None:
        path = out_dir / "tradeoff_baseline.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ndcg", "bacc", "label"])
            w.writerow([repr(base.ndcg), repr(base.bacc_mean), "original"])
        written["baseline"] = path
    series: dict[str, list[ReportRow]] = {}
    for row in report.rows:
        if not row.is_original and row.status == "ok":
            series.setdefault(getattr(row, by), []).append(row)
    for key, rows in series.items():
        path = out_dir / f"tradeoff_{by}_{key}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ndcg", "bacc", "label"])
            for r in rows:
                w.writerow([repr(r.ndcg), repr(r.bacc_mean), r.label])
        written[key] = path
    return written


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedData:
    data: InteractionDataset
    partition: GroupPartition
    trainval: InteractionDataset
    test: InteractionDataset
    table: StereotypeTable


def prepare(cfg: ExperimentConfig, dataset: InteractionDataset | None = None,
            partition: GroupPartition | None = None) -> PreparedData:
    """Filter, attach labels and carve the test slice before any obfuscation."""
    if dataset is None:
        dataset = k_core_filter(load_interactions(cfg.interactions), cfg.core_k)
        partition = load_user_attributes(cfg.attributes, dataset)
    else:
        if partition is None:
            raise ValueError("an in-memory dataset needs its partition")
        kept = k_core_filter(dataset, cfg.core_k)
        if kept.users != dataset.users:
            keep = {u: i for i, u in enumerate(dataset.users)}
            partition = GroupPartition(partition.labels, partition.groups[[keep[u] for u in kept.users]])
        dataset = kept
    trainval, test = split_per_user(dataset, SplitSpec(cfg.test_fraction, cfg.test_seed))
    return PreparedData(dataset, partition, trainval, test, StereotypeTable.build(trainval, partition))


def _measure(cfg: ExperimentConfig, prep: PreparedData, trainval: InteractionDataset, cell_dir: Path | None):
    train, val = split_per_user(trainval, SplitSpec(cfg.val_fraction, cfg.val_seed))
    model = train_bpr(train, val, cfg.train)
    ndcg = evaluate_model(model, prep.test, trainval, k=10)
    attack = run_attack_cv(trainval, prep.partition, cfg.attack, cfg.folds, cfg.attack_seed, prep.data.n_items)
    if cell_dir is not None:
        save_model(model, cell_dir / "bpr_model.csv")
    return ndcg, attack


def _seeds(cfg: ExperimentConfig) -> dict:
    return {
        "obfuscation": cfg.obfuscation_seed,
        "split": f"{cfg.test_seed}/{cfg.val_seed}",
        "attack": cfg.attack_seed,
        "train": cfg.train.seed,
    }


def _run_original(cfg, prep, out) -> ReportRow:
    start = time.perf_counter()
    cell_dir = out / "original" if out is not None else None
    ndcg, attack = _measure(cfg, prep, prep.trainval, cell_dir)
    scores = user_scores(prep.trainval, prep.partition, prep.table)
    return ReportRow(
        cfg.name, "original", "original", bacc_mean=attack.mean, bacc_folds=attack.per_fold, ndcg=ndcg,
        gamma=compute_gamma(scores), seeds=_seeds(cfg), wall_clock=time.perf_counter() - start,
    )


def _run_cell(cfg, prep, out, cell) -> ReportRow:
    strategy, sampler, ratio, aggregator = cell
    row = ReportRow(cfg.name, strategy, sampler, ratio, aggregator, cfg.weight if strategy == "weighted" else None,
                    seeds=_seeds(cfg))
    start = time.perf_counter()
    try:
        ocfg = cell_config(cfg, *cell)
        outcome = obfuscate_dataset(prep.trainval, prep.partition, ocfg, prep.table)
        cell_dir = None
        if out is not None:
            cell_dir = out / "cells" / f"{strategy}_{sampler}_rho{ratio}_{aggregator}"
            write_interactions(outcome.dataset, cell_dir / "obfuscated_trainval.csv")
            write_audit(outcome, cell_dir / "audit.csv")
        ndcg, attack = _measure(cfg, prep, outcome.dataset, cell_dir)
        row.bacc_mean, row.bacc_folds, row.ndcg = attack.mean, attack.per_fold, ndcg
        row.users_selected, row.items_added, row.items_removed = (
            outcome.n_selected, outcome.n_added, outcome.n_removed)
        row.gamma = outcome.gamma
    except Exception as exc:  # a failed cell is reported, the grid continues
        logger.exception("cell %s failed", cell)
        row.status, row.error = "failed", f"{type(exc).__name__}: {exc}"
    row.wall_clock = time.perf_counter() - start
    return row


def run_experiment(cfg: ExperimentConfig, dataset: InteractionDataset | None = None,
                   partition: GroupPartition | None = None) -> ExperimentReport:
    """Run the original baseline and every grid cell; rows follow grid order."""
    prep = prepare(cfg, dataset, partition)
    out = Path(cfg.out) if cfg.save_artifacts else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_interactions(prep.trainval, out / "trainval.csv")
        write_interactions(prep.test, out / "test.csv")
        write_user_attributes(prep.data, prep.partition, out / "attributes.csv")
        write_id_maps(prep.data, out)
        emit_distributions(prep.table, user_scores(prep.trainval, prep.partition, prep.table),
                           out / "distributions", user_ids=prep.data.users)

    rows = [_run_original(cfg, prep, out)]
    cells = cfg.grid()
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows += list(pool.map(lambda c: _run_cell(cfg, prep, out, c), cells))
    else:
        rows += [_run_cell(cfg, prep, out, c) for c in cells]
    report = ExperimentReport(rows)
    if out is not None:
        write_report(report, out / "report.csv")
        write_timings(report, out / "timings.csv")
        emit_tradeoff(report, out / "tradeoff")
    return report


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes)

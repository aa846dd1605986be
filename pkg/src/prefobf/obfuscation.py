"""Stereotypicality-driven obfuscation of user profiles.

Users whose stereotypicality reaches the threshold get a small, score-ranked
candidate set of items to remove (most stereotypical for their own group) or
to impute (most counter-stereotypical unseen items). Candidates then pass a
sampler: independent Bernoulli trials with success rate ``|score|``
(``sbsampling``), the whole candidate set (``topstereo``), or the ranking is
bypassed entirely for uniform draws (``random``).

Randomness is drawn from one stream per user, derived from ``(seed, user)``,
so results do not depend on iteration order or the number of workers.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import GroupPartition, InteractionDataset, fraction_count
from .errors import ProfileEmptiedError
from .stereotype import AGGREGATORS, GAMMA_MODES, StereotypeTable, compute_gamma, user_score

logger = logging.getLogger(__name__)

STRATEGIES = ("imputation", "removal", "weighted")
SAMPLERS = ("sbsampling", "topstereo", "random")


@dataclass(frozen=True)
class ObfuscationConfig:
    strategy: str = "removal"
    sampler: str = "sbsampling"
    ratio: float = 0.1
    weight: float = 0.5
    aggregator: str = "mean"
    gamma_mode: str = "mean"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", self.strategy.lower())
        object.__setattr__(self, "sampler", self.sampler.lower())
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}")
        if self.gamma_mode not in GAMMA_MODES:
            raise ValueError(f"gamma_mode must be one of {GAMMA_MODES}, got {self.gamma_mode!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class UserRecord:
    user: int
    group: int
    score: float
    selected: bool
    candidates: tuple[int, ...] = ()
    chosen: tuple[int, ...] = ()
    added: tuple[int, ...] = ()
    removed: tuple[int, ...] = ()
    note: str = ""


@dataclass(frozen=True, eq=False)
class ObfuscationOutcome:
    dataset: InteractionDataset
    records: tuple[UserRecord, ...] = field(repr=False)
    gamma: float = math.nan
    config: ObfuscationConfig | None = None

    @property
    def n_selected(self) -> int:
        return sum(r.selected for r in self.records)

    @property
    def n_added(self) -> int:
        return sum(len(r.added) for r in self.records)

    @property
    def n_removed(self) -> int:
        return sum(len(r.removed) for r in self.records)


def user_rng(seed: int, user: int) -> np.random.Generator:
    """Independent generator for one user, keyed by ``(seed, user)``."""
    return np.random.default_rng([seed, user])


def build_mu(table: StereotypeTable, group: int) -> np.ndarray:
    """Item scores oriented so that positive means stereotypical for ``group``."""
    return table.oriented(group)


def split_budget(n: int, strategy: str, weight: float = 0.5) -> tuple[int, int]:
    """Split a budget of ``n`` items into (imputation, removal) counts."""
    if strategy == "imputation":
        return n, 0
    if strategy == "removal":
        return 0, n
    if strategy == "weighted":
        n_imp = min(n, math.ceil(weight * n - 1e-9))
        return n_imp, n - n_imp
    raise ValueError(f"unknown strategy {strategy!r}")


def _unseen(n_items: int, profile: np.ndarray) -> np.ndarray:
    mask = np.ones(n_items, dtype=bool)
    mask[profile] = False
    return np.flatnonzero(mask)


def _top(pool: np.ndarray, key: np.ndarray, n: int) -> np.ndarray:
    # ascending key, ties by ascending item index
    order = np.lexsort((pool, key[pool]))
    return pool[order[:n]]


def subsample(
    n_items: int,
    profile,
    ratio: float,
    strategy: str,
    mu: np.ndarray,
    weight: float = 0.5,
) -> np.ndarray:
    """Ordered obfuscation candidates for one user.

    Imputation candidates (lowest scores among unseen items) come first,
    followed by removal candidates (highest scores among profile items).
    """
    profile = np.asarray(profile, dtype=np.int64)
    n = fraction_count(ratio, len(profile))
    n_imp, n_rem = split_budget(n, strategy, weight)
    parts = []
    if n_imp:
        parts.append(_top(_unseen(n_items, profile), mu, n_imp))
    if n_rem:
        parts.append(_top(profile, -mu, n_rem))
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def bernoulli_select(candidates: np.ndarray, mu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Keep each candidate independently with probability ``|mu[v]|``."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if not len(candidates):
        return candidates
    draws = rng.random(len(candidates))
    return candidates[draws < np.abs(mu[candidates])]


def topstereo_select(candidates: np.ndarray) -> np.ndarray:
    return np.asarray(candidates, dtype=np.int64)


def random_select(
    n_items: int,
    profile,
    ratio: float,
    strategy: str,
    weight: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Uniform draws without replacement from the strategy's pools."""
    profile = np.asarray(profile, dtype=np.int64)
    n = fraction_count(ratio, len(profile))
    n_imp, n_rem = split_budget(n, strategy, weight)
    parts = []
    if n_imp:
        pool = _unseen(n_items, profile)
        parts.append(rng.choice(pool, size=min(n_imp, len(pool)), replace=False))
    if n_rem:
        parts.append(rng.choice(profile, size=min(n_rem, len(profile)), replace=False))
    return np.concatenate(parts).astype(np.int64) if parts else np.empty(0, dtype=np.int64)


def obfuscate_profile(profile, chosen, strategy: str) -> np.ndarray:
    """Apply removals and/or imputations; returns the sorted new profile."""
    profile = np.asarray(profile, dtype=np.int64)
    chosen = np.asarray(chosen, dtype=np.int64)
    in_profile = np.isin(chosen, profile)
    if strategy == "removal" and not in_profile.all():
        raise ValueError("removal may only delete items present in the profile")
    if strategy == "imputation" and in_profile.any():
        raise ValueError("imputation may only add items absent from the profile")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    kept = np.setdiff1d(profile, chosen[in_profile])
    result = np.union1d(kept, chosen[~in_profile])
    if not len(result):
        raise ProfileEmptiedError("obfuscation would leave the profile empty")
    return result


def _obfuscate_user(
    user: int,
    profile: np.ndarray,
    group: int,
    score: float,
    gamma: float,
    mu: np.ndarray,
    config: ObfuscationConfig,
) -> tuple[np.ndarray, UserRecord]:
    selected = bool(len(profile)) and score >= gamma
    if not selected:
        return profile, UserRecord(user, group, score, False)

    rng = user_rng(config.seed, user)
    n_items = len(mu)
    if config.sampler == "random":
        candidates = random_select(n_items, profile, config.ratio, config.strategy, config.weight, rng)
        chosen = candidates
    else:
        candidates = subsample(n_items, profile, config.ratio, config.strategy, mu, config.weight)
        if config.sampler == "sbsampling":
            chosen = bernoulli_select(candidates, mu, rng)
        else:
            chosen = topstereo_select(candidates)

    try:
        new = obfuscate_profile(profile, chosen, config.strategy)
    except ProfileEmptiedError:
        logger.warning("user %d: obfuscation would empty the profile; left unchanged", user)
        return profile, UserRecord(
            user, group, score, True, tuple(map(int, candidates)), tuple(map(int, chosen)), note="profile-emptied"
        )
    added = np.setdiff1d(new, profile)
    removed = np.setdiff1d(profile, new)
    return new, UserRecord(
        user,
        group,
        score,
        True,
        tuple(map(int, candidates)),
        tuple(map(int, chosen)),
        tuple(map(int, added)),
        tuple(map(int, removed)),
    )


def obfuscate_dataset(
    dataset: InteractionDataset,
    partition: GroupPartition,
    config: ObfuscationConfig,
    table: StereotypeTable | None = None,
    workers: int = 1,
) -> ObfuscationOutcome:
    """Obfuscate every user whose stereotypicality is at least the threshold.

    ``table`` defaults to the one built from ``dataset`` itself. The threshold
    is computed from the same scores that drive the per-user selection.
    """
    if table is None:
        table = StereotypeTable.build(dataset, partition)
    if table.n_items != dataset.n_items:
        raise ValueError(f"table covers {table.n_items} items, dataset has {dataset.n_items}")
    oriented = (build_mu(table, 0), build_mu(table, 1))
    profiles = dataset.profiles
    scores = [
        user_score(p, oriented[partition.groups[u]], config.aggregator) if len(p) else math.nan
        for u, p in enumerate(profiles)
    ]
    gamma = compute_gamma(scores, config.gamma_mode)

    def work(u: int):
        g = int(partition.groups[u])
        return _obfuscate_user(u, profiles[u], g, scores[u], gamma, oriented[g], config)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(dataset.n_users), chunksize=64))
    else:
        results = [work(u) for u in range(dataset.n_users)]

    new_dataset = InteractionDataset.from_profiles(dataset.users, dataset.items, [r[0] for r in results])
    return ObfuscationOutcome(new_dataset, tuple(r[1] for r in results), gamma, config)


def write_audit(outcome: ObfuscationOutcome, path) -> None:
    """Per-user audit: score, selection flag and the items touched."""
    ds = outcome.dataset
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "score", "gamma", "selected", "n_candidates", "n_chosen", "added", "removed", "note"])
        for r in outcome.records:
            w.writerow([
                ds.users[r.user],
                repr(float(r.score)),
                repr(float(outcome.gamma)),
                int(r.selected),
                len(r.candidates),
                len(r.chosen),
                " ".join(ds.items[i] for i in r.added),
                " ".join(ds.items[i] for i in r.removed),
                r.note,
            ])

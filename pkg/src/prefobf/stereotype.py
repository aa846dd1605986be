"""Item group inclination, item/user stereotypicality and the selection threshold."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import GroupPartition, InteractionDataset
from .errors import EmptyGroupError, UndefinedScoreError

AGGREGATORS = ("mean", "median")
GAMMA_MODES = ("mean", "median")


def compute_igi(dataset: InteractionDataset, partition: GroupPartition) -> np.ndarray:
    """Fraction of each group's users that interacted with each item.

    Returns an ``(n_items, 2)`` array; column ``g`` is the inclination toward
    group ``g`` of ``partition``.
    """
    if len(partition) != dataset.n_users:
        raise ValueError(f"partition covers {len(partition)} users, dataset has {dataset.n_users}")
    sizes = np.bincount(partition.groups, minlength=2)
    if (sizes == 0).any():
        raise EmptyGroupError(f"inclination undefined for an empty group, sizes {tuple(sizes)}")
    user_group = partition.groups[dataset.pairs[:, 0]]
    igi = np.empty((dataset.n_items, 2))
    for g in (0, 1):
        counts = np.bincount(dataset.pairs[user_group == g, 1], minlength=dataset.n_items)
        igi[:, g] = counts / sizes[g]
    return igi


def compute_ister(igi: np.ndarray, pair: tuple[int, int] = (0, 1)) -> np.ndarray:
    """Signed, max-normalised inclination gap between the two groups of ``pair``.

    Items with zero inclination toward both groups score 0.
    """
    g, h = pair
    a, b = igi[:, g], igi[:, h]
    peak = np.maximum(a, b)
    out = np.zeros(len(igi))
    np.divide(a - b, peak, out=out, where=peak > 0)
    return out


@dataclass(frozen=True, eq=False)
class StereotypeTable:
    """Per-item inclination and stereotypicality, oriented toward ``labels[0]``."""

    labels: tuple[str, str]
    igi: np.ndarray = field(repr=False)
    ister: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, dataset: InteractionDataset, partition: GroupPartition) -> "StereotypeTable":
        igi = compute_igi(dataset, partition)
        ister = compute_ister(igi, (0, 1))
        igi.setflags(write=False)
        ister.setflags(write=False)
        return cls(partition.labels, igi, ister)

    @property
    def n_items(self) -> int:
        return len(self.ister)

    def oriented(self, group: int) -> np.ndarray:
        """Scores signed so that positive means stereotypical for ``group``."""
        if group == 0:
            return self.ister
        if group == 1:
            return -self.ister
        raise ValueError(f"unknown group tag {group!r}")


def user_score(profile: Sequence[int], signed_scores: np.ndarray, aggregator: str = "mean") -> float:
    """Mean or median of the oriented item scores over a user's profile."""
    if len(profile) == 0:
        raise UndefinedScoreError("stereotypicality of an empty profile is undefined")
    values = [float(v) for v in np.asarray(signed_scores)[np.asarray(profile, dtype=np.int64)]]
    if aggregator == "mean":
        return statistics.mean(values)
    if aggregator == "median":
        return statistics.median(values)
    raise ValueError(f"aggregator must be one of {AGGREGATORS}, got {aggregator!r}")


def user_scores(
    dataset: InteractionDataset,
    partition: GroupPartition,
    table: StereotypeTable,
    aggregator: str = "mean",
) -> np.ndarray:
    """S_u for every user; users without interactions get NaN."""
    oriented = (table.oriented(0), table.oriented(1))
    out = np.full(dataset.n_users, np.nan)
    for u, profile in enumerate(dataset.profiles):
        if len(profile):
            out[u] = user_score(profile, oriented[partition.groups[u]], aggregator)
    return out


def compute_gamma(scores: Sequence[float], mode: str = "mean") -> float:
    """Selection threshold over all users' scores (NaN entries are skipped).

    The mean is exact and correctly rounded, so equal scores give exactly that
    score back.
    """
    values = [float(s) for s in scores if not np.isnan(s)]
    if not values:
        raise UndefinedScoreError("threshold needs at least one user score")
    if mode == "mean":
        return float(statistics.mean(values))
    if mode == "median":
        return float(statistics.median(values))
    raise ValueError(f"gamma mode must be one of {GAMMA_MODES}, got {mode!r}")


def ister_histogram(ister: np.ndarray, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Counts over equal bins on [-1, 1]; the top bin is closed on the right."""
    return np.histogram(np.asarray(ister), bins=bins, range=(-1.0, 1.0))


def emit_distributions(
    table: StereotypeTable,
    scores: np.ndarray,
    out_dir,
    gamma: float | None = None,
    bins: int = 20,
    user_ids: Sequence[str] | None = None,
) -> dict[str, Path]:
    """Write the item-score histogram and the descending user-score series."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores = np.asarray(scores, dtype=float)
    if gamma is None:
        gamma = compute_gamma(scores)

    hist_path = out_dir / "ister_histogram.csv"
    counts, edges = ister_histogram(table.ister, bins)
    with hist_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])

    series_path = out_dir / "user_stereotypicality.csv"
    valid = np.flatnonzero(~np.isnan(scores))
    # stable sort keeps ascending user index among equal scores
    order = valid[np.argsort(-scores[valid], kind="stable")]
    with series_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "user_id", "score", "gamma"])
        for rank, u in enumerate(order):
            uid = user_ids[u] if user_ids is not None else str(u)
            w.writerow([rank, uid, repr(float(scores[u])), repr(float(gamma))])

    summary_path = out_dir / "stereotype_summary.csv"
    with summary_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for key, value in summarize(table, scores, gamma).items():
            w.writerow([key, value])
    return {"histogram": hist_path, "series": series_path, "summary": summary_path}


def summarize(table: StereotypeTable, scores: np.ndarray, gamma: float) -> dict[str, object]:
    ister = table.ister
    valid = np.asarray(scores)[~np.isnan(scores)]
    return {
        "group_order": "/".join(table.labels),
        "n_items": len(ister),
        "ister_mean": float(ister.mean()) if len(ister) else float("nan"),
        "ister_min": float(ister.min()) if len(ister) else float("nan"),
        "ister_max": float(ister.max()) if len(ister) else float("nan"),
        "items_neutral": int((ister == 0).sum()),
        "items_exclusive": int((np.abs(ister) == 1).sum()),
        "gamma": float(gamma),
        "users_scored": len(valid),
        "users_selected": int((valid >= gamma).sum()),
    }

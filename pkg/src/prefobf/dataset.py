"""Implicit-feedback interaction data: loading, validation, filtering and splits.

Interactions are stored as a sorted, de-duplicated ``(n, 2)`` integer array of
``(user_index, item_index)`` pairs next to the external-id catalogs. Datasets
derived from one another (splits, obfuscated copies) share catalogs so that
indices stay aligned across all of them.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoverageError,
    DimensionError,
    EmptyCoreError,
    EmptyInputError,
    LabelCardinalityError,
    ParseError,
    SplitInfeasibleError,
)

logger = logging.getLogger(__name__)

# Absorbs representation error in products such as 0.3 * 10.
_COUNT_EPS = 1e-9


def fraction_count(fraction: float, size: int) -> int:
    """Return ``floor(fraction * size)`` robust to binary representation error."""
    return int(math.floor(fraction * size + _COUNT_EPS))


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Immutable set of observed (user, item) pairs over fixed catalogs.

    ``pairs`` is normalised on construction: cast to int64, de-duplicated and
    sorted by user then item. Catalog entries may have no interactions when the
    dataset is derived from a larger one (a holdout slice, an obfuscated copy).
    """

    users: tuple[str, ...]
    items: tuple[str, ...]
    pairs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "items", tuple(self.items))
        pairs = np.asarray(self.pairs, dtype=np.int64)
        if pairs.size == 0:
            pairs = np.empty((0, 2), dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise DimensionError(f"pairs must have shape (n, 2), got {pairs.shape}")
        if len(pairs):
            if pairs.min() < 0 or pairs[:, 0].max() >= len(self.users) or pairs[:, 1].max() >= len(self.items):
                raise DimensionError("interaction references an index outside the catalogs")
            pairs = np.unique(pairs, axis=0)
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def from_profiles(cls, users, items, profiles: Sequence[Iterable[int]]) -> "InteractionDataset":
        if len(profiles) != len(users):
            raise DimensionError(f"{len(profiles)} profiles for {len(users)} users")
        chunks = [
            np.column_stack([np.full(len(p), u, dtype=np.int64), np.fromiter(p, dtype=np.int64, count=len(p))])
            for u, p in enumerate(map(list, profiles))
            if len(p)
        ]
        pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
        return cls(users, items, pairs)

    def with_pairs(self, pairs: np.ndarray) -> "InteractionDataset":
        """New dataset over the same catalogs."""
        return InteractionDataset(self.users, self.items, pairs)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def __len__(self) -> int:
        return len(self.pairs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        return (
            self.users == other.users
            and self.items == other.items
            and np.array_equal(self.pairs, other.pairs)
        )

    __hash__ = None

    @cached_property
    def user_counts(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 0], minlength=self.n_users)

    @cached_property
    def item_counts(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 1], minlength=self.n_items)

    @cached_property
    def profiles(self) -> tuple[np.ndarray, ...]:
        """Per-user sorted item-index arrays (the X_u sets)."""
        bounds = np.cumsum(self.user_counts)[:-1]
        return tuple(np.split(self.pairs[:, 1], bounds))

    def profile(self, user: int) -> np.ndarray:
        return self.profiles[user]

    def same_catalogs(self, other: "InteractionDataset") -> bool:
        return self.users == other.users and self.items == other.items


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """Assignment of each user index to one of exactly two attribute groups."""

    labels: tuple[str, str]
    groups: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) != 2 or labels[0] == labels[1]:
            raise LabelCardinalityError(f"exactly two distinct group labels required, got {labels}")
        groups = np.asarray(self.groups, dtype=np.int8).copy()
        if groups.ndim != 1 or ((groups != 0) & (groups != 1)).any():
            raise ValueError("group assignment must be a vector of 0/1 tags")
        sizes = np.bincount(groups, minlength=2)
        if (sizes == 0).any():
            raise LabelCardinalityError(f"both groups must be non-empty, sizes {tuple(sizes)}")
        groups.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, int]:
        counts = np.bincount(self.groups, minlength=2)
        return int(counts[0]), int(counts[1])

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.groups == group)

    def label_of(self, user: int) -> str:
        return self.labels[self.groups[user]]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupPartition):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.groups, other.groups)

    __hash__ = None


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError(f"holdout fraction must lie in (0, 1), got {self.fraction}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def _sniff_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _read_table(path, delimiter: str | None, min_columns: int) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise EmptyInputError(f"{path}: file is empty")
        delim = delimiter or _sniff_delimiter(header_line)
        header = next(csv.reader([header_line], delimiter=delim))
        if len(header) < min_columns:
            raise ParseError(path, 1, f"header needs at least {min_columns} columns, got {len(header)}")
        rows = []
        for lineno, row in enumerate(csv.reader(fh, delimiter=delim), start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} columns, got {len(row)}")
            rows.append([c.strip() for c in row])
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return header, rows


def _build(rows_per_file: list[list[tuple[str, str]]]) -> list[InteractionDataset]:
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    encoded = []
    for rows in rows_per_file:
        arr = np.empty((len(rows), 2), dtype=np.int64)
        for n, (u, i) in enumerate(rows):
            arr[n, 0] = user_index.setdefault(u, len(user_index))
            arr[n, 1] = item_index.setdefault(i, len(item_index))
        encoded.append(arr)
    users, items = tuple(user_index), tuple(item_index)
    return [InteractionDataset(users, items, arr) for arr in encoded]


def load_interactions(path, delimiter: str | None = None) -> InteractionDataset:
    """Read a ``user_id,item_id[,...]`` file; extra columns are ignored.

    Catalogs are ordered by first appearance. Duplicate rows collapse into a
    single interaction.
    """
    _, rows = _read_table(path, delimiter, 2)
    dataset = _build([[(r[0], r[1]) for r in rows]])[0]
    logger.info(
        "%s: %d rows, %d users, %d items, %d interactions",
        path, len(rows), dataset.n_users, dataset.n_items, len(dataset),
    )
    return dataset


def load_many(paths: Sequence, delimiter: str | None = None) -> list[InteractionDataset]:
    """Load several interaction files onto one shared pair of catalogs."""
    tables = [_read_table(p, delimiter, 2)[1] for p in paths]
    return _build([[(r[0], r[1]) for r in rows] for rows in tables])


def write_interactions(dataset: InteractionDataset, path, delimiter: str = ",") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(["user_id", "item_id"])
        for u, i in dataset.pairs:
            writer.writerow([dataset.users[u], dataset.items[i]])


def write_id_maps(dataset: InteractionDataset, directory, prefix: str = "") -> tuple[Path, Path]:
    """Write ``internal_index,external_id`` maps for both catalogs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, catalog in (("users", dataset.users), ("items", dataset.items)):
        path = directory / f"{prefix}{name}_idmap.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["internal_index", "external_id"])
            writer.writerows(enumerate(catalog))
        out.append(path)
    return out[0], out[1]


def load_user_attributes(
    path, dataset: InteractionDataset, order: Sequence[str] | None = None, delimiter: str | None = None
) -> GroupPartition:
    """Map every dataset user to one of two groups from a ``user_id,label`` file.

    Group order is ``order`` when given, otherwise the sorted label strings.
    Users listed in the file but absent from the dataset are ignored.
    """
    _, rows = _read_table(path, delimiter, 2)
    labels_by_user = {r[0]: r[1] for r in rows}
    distinct = sorted(set(labels_by_user.values()))
    if len(distinct) > 2:
        raise LabelCardinalityError(f"expected 2 distinct labels, found {len(distinct)}: {distinct}")
    missing = [u for u in dataset.users if u not in labels_by_user]
    if missing:
        raise CoverageError(missing)
    if order is not None:
        order = tuple(order)
        unknown = set(distinct) - set(order)
        if unknown:
            raise LabelCardinalityError(f"labels {sorted(unknown)} not in requested order {order}")
    else:
        if len(distinct) < 2:
            raise LabelCardinalityError(f"expected 2 distinct labels, found {distinct}")
        order = tuple(distinct)
    known = set(dataset.users)
    extra = sum(1 for u in labels_by_user if u not in known)
    if extra:
        logger.warning("%s: ignoring %d labelled users absent from the dataset", path, extra)
    position = {lab: g for g, lab in enumerate(order)}
    groups = np.array([position[labels_by_user[u]] for u in dataset.users], dtype=np.int8)
    return GroupPartition(order, groups)


def write_user_attributes(dataset: InteractionDataset, partition: GroupPartition, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label"])
        for u, ext in enumerate(dataset.users):
            writer.writerow([ext, partition.label_of(u)])


# --------------------------------------------------------------------------
# Filtering and splitting
# --------------------------------------------------------------------------


def k_core_filter(dataset: InteractionDataset, k: int) -> InteractionDataset:
    """Maximal sub-dataset where every user and item has at least ``k`` interactions.

    Surviving users and items keep their relative catalog order and are
    re-indexed densely.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pairs = dataset.pairs
    keep_u = np.ones(dataset.n_users, dtype=bool)
    keep_i = np.ones(dataset.n_items, dtype=bool)
    while True:
        alive = pairs[keep_u[pairs[:, 0]] & keep_i[pairs[:, 1]]]
        new_u = np.bincount(alive[:, 0], minlength=dataset.n_users) >= k
        new_i = np.bincount(alive[:, 1], minlength=dataset.n_items) >= k
        if np.array_equal(new_u, keep_u) and np.array_equal(new_i, keep_i):
            break
        keep_u, keep_i = new_u, new_i
    if not len(alive):
        raise EmptyCoreError(f"{k}-core of the dataset is empty")

    user_map = np.cumsum(keep_u) - 1
    item_map = np.cumsum(keep_i) - 1
    users = tuple(u for u, keep in zip(dataset.users, keep_u) if keep)
    items = tuple(i for i, keep in zip(dataset.items, keep_i) if keep)
    return InteractionDataset(users, items, np.column_stack([user_map[alive[:, 0]], item_map[alive[:, 1]]]))


def split_per_user(dataset: InteractionDataset, spec: SplitSpec) -> tuple[InteractionDataset, InteractionDataset]:
    """Move ``max(1, floor(fraction * |X_u|))`` random items of each user into a holdout."""
    counts = dataset.user_counts
    too_small = np.flatnonzero(counts < 2)
    if len(too_small):
        names = [dataset.users[u] for u in too_small[:20]]
        raise SplitInfeasibleError(f"users with fewer than 2 interactions cannot be split: {names}")

    rng = np.random.default_rng(spec.seed)
    held = np.zeros(len(dataset), dtype=bool)
    start = 0
    for size in counts:
        n_hold = max(1, fraction_count(spec.fraction, int(size)))
        held[start + rng.choice(size, size=n_hold, replace=False)] = True
        start += size
    return dataset.with_pairs(dataset.pairs[~held]), dataset.with_pairs(dataset.pairs[held])


def kfold_user_split(users: Sequence[int], folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffle users and cut them into ``folds`` near-equal test sets."""
    users = np.asarray(users, dtype=np.int64)
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if folds > len(users):
        raise SplitInfeasibleError(f"cannot make {folds} folds from {len(users)} users")
    shuffled = np.random.default_rng(seed).permutation(users)
    out = []
    for test in np.array_split(shuffled, folds):
        mask = np.isin(shuffled, test)
        out.append((np.sort(shuffled[~mask]), np.sort(test)))
    return out


def to_preference_vectors(
    dataset: InteractionDataset, n_items: int | None = None, dtype=np.float64
) -> np.ndarray:
    """Dense binary user-by-item matrix with ``n_items`` columns."""
    n_items = dataset.n_items if n_items is None else n_items
    if len(dataset) and dataset.pairs[:, 1].max() >= n_items:
        raise DimensionError(f"item index {dataset.pairs[:, 1].max()} outside universe of size {n_items}")
    out = np.zeros((dataset.n_users, n_items), dtype=dtype)
    out[dataset.pairs[:, 0], dataset.pairs[:, 1]] = 1
    return out

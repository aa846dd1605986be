"""BPR matrix factorisation and top-k ranking evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import InteractionDataset
from .errors import DimensionError, DivergenceError
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 512
    patience: int = 10
    seed: int = 0
    dim: int = 64
    reg: float = 1e-4
    init_std: float = 0.01
    k: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1 or self.dim < 1 or self.k < 1:
            raise ValueError("batch_size, dim and k must be positive")
        if self.reg < 0 or self.init_std <= 0:
            raise ValueError("reg must be >= 0 and init_std > 0")


@dataclass(eq=False)
class BprModel:
    user_emb: np.ndarray
    item_emb: np.ndarray
    seed: int = 0
    best_epoch: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def dim(self) -> int:
        return self.user_emb.shape[1]

    @property
    def n_users(self) -> int:
        return self.user_emb.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_emb.shape[0]

    def scores(self, users=None) -> np.ndarray:
        users = slice(None) if users is None else users
        return self.user_emb[users] @ self.item_emb.T


# --------------------------------------------------------------------------
# Objective
# --------------------------------------------------------------------------


def bpr_loss(user_emb, item_emb, users, pos, neg, reg: float) -> float:
    pu, qi, qj = user_emb[users], item_emb[pos], item_emb[neg]
    x = np.einsum("bd,bd->b", pu, qi - qj)
    penalty = (pu * pu).sum(1) + (qi * qi).sum(1) + (qj * qj).sum(1)
    return float(np.mean(np.logaddexp(0.0, -x) + 0.5 * reg * penalty))


def bpr_loss_and_grads(user_emb, item_emb, users, pos, neg, reg: float):
    """Mean over the batch of ``-ln sigmoid(x_uij) + reg/2 * ||params||^2``.

    Returns ``(loss, grad_user_emb, grad_item_emb)`` with dense gradients.
    """
    b = len(users)
    pu, qi, qj = user_emb[users], item_emb[pos], item_emb[neg]
    diff = qi - qj
    x = np.einsum("bd,bd->b", pu, diff)
    penalty = (pu * pu).sum(1) + (qi * qi).sum(1) + (qj * qj).sum(1)
    loss = float(np.mean(np.logaddexp(0.0, -x) + 0.5 * reg * penalty))

    # d softplus(-x) / dx = -sigmoid(-x)
    dx = (-0.5 * (1.0 - np.tanh(0.5 * x)) / b)[:, None]
    g_user = np.zeros_like(user_emb)
    g_item = np.zeros_like(item_emb)
    np.add.at(g_user, users, dx * diff + (reg / b) * pu)
    np.add.at(g_item, pos, dx * pu + (reg / b) * qi)
    np.add.at(g_item, neg, -dx * pu + (reg / b) * qj)
    return loss, g_user, g_item


def sample_negatives(rng: np.random.Generator, users: np.ndarray, n_items: int,
                     positive_keys: np.ndarray, max_rounds: int = 1000) -> np.ndarray:
    """Uniform unobserved items, redrawing any accidental positives."""
    neg = rng.integers(0, n_items, size=len(users))
    for _ in range(max_rounds):
        keys = users * n_items + neg
        idx = np.searchsorted(positive_keys, keys)
        idx[idx == len(positive_keys)] = 0
        clash = positive_keys[idx] == keys
        if not clash.any():
            return neg
        neg[clash] = rng.integers(0, n_items, size=int(clash.sum()))
    raise RuntimeError("could not draw unobserved items; some user has interacted with nearly every item")


# --------------------------------------------------------------------------
# Ranking metrics
# --------------------------------------------------------------------------


def ndcg_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int) -> float:
    """Binary-relevance NDCG over the first ``k`` entries of ``ranked``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    dcg = sum(1.0 / math.log2(i + 2) for i, v in enumerate(list(ranked)[:k]) if v in relevant)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(len(relevant), k)))
    return dcg / idcg


def _rank_rows(scores: np.ndarray, k: int) -> np.ndarray:
    # descending score, ties by ascending item index
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]


def recommend_topk(model: BprModel, user: int, k: int, exclude: Iterable[int] = ()) -> list[int]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0 <= user < model.n_users:
        raise IndexError(f"user {user} not in model")
    scores = model.scores([user])
    excl = np.fromiter(exclude, dtype=np.int64)
    scores[0, excl] = -np.inf
    eligible = model.n_items - len(np.unique(excl))
    return [int(v) for v in _rank_rows(scores, min(k, eligible))[0]]


def evaluate_model(model: BprModel, test: InteractionDataset, seen: InteractionDataset | None,
                   k: int = 10, chunk: int = 1024) -> float:
    """Mean NDCG@k over users with a non-empty test profile; seen items are excluded."""
    if test.n_items != model.n_items or test.n_users != model.n_users:
        raise DimensionError("test dataset catalogs do not match the model")
    users = np.flatnonzero(test.user_counts > 0)
    if not len(users):
        logger.warning("no test interactions; NDCG reported as 0")
        return 0.0
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    ideal = np.concatenate([[0.0], np.cumsum(discounts)])
    total = 0.0
    for start in range(0, len(users), chunk):
        block = users[start:start + chunk]
        scores = model.scores(block)
        if seen is not None:
            mask = np.isin(seen.pairs[:, 0], block)
            rows = np.searchsorted(block, seen.pairs[mask, 0])
            scores[rows, seen.pairs[mask, 1]] = -np.inf
        top = _rank_rows(scores, k)
        rel = np.zeros_like(scores, dtype=bool)
        tmask = np.isin(test.pairs[:, 0], block)
        rel[np.searchsorted(block, test.pairs[tmask, 0]), test.pairs[tmask, 1]] = True
        hits = np.take_along_axis(rel, top, axis=1)
        # an excluded (-inf) item can only reach the top-k when too few remain
        hits &= np.isfinite(np.take_along_axis(scores, top, axis=1))
        dcg = hits @ discounts[: top.shape[1]]
        n_rel = np.minimum(test.user_counts[block], k)
        total += float(np.sum(dcg / ideal[n_rel]))
    return total / len(users)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def train_bpr(train: InteractionDataset, validation: InteractionDataset | None, cfg: TrainConfig) -> BprModel:
    """Fit BPR-MF with Adam; early-stops on validation NDCG@k and keeps the best epoch."""
    if not len(train):
        raise ValueError("training set is empty")
    if validation is not None:
        if not train.same_catalogs(validation):
            raise DimensionError("train and validation must share catalogs")
        orphans = np.flatnonzero((validation.user_counts > 0) & (train.user_counts == 0))
        if len(orphans):
            raise ValueError(f"validation users without training interactions: {orphans[:10].tolist()}")

    rng = np.random.default_rng(cfg.seed)
    params = {
        "user": rng.normal(0.0, cfg.init_std, size=(train.n_users, cfg.dim)),
        "item": rng.normal(0.0, cfg.init_std, size=(train.n_items, cfg.dim)),
    }
    opt = Adam(params, lr=cfg.lr)
    model = BprModel(params["user"], params["item"], seed=cfg.seed)
    pairs = train.pairs
    keys = pairs[:, 0] * train.n_items + pairs[:, 1]
    n = len(pairs)
    steps = math.ceil(n / cfg.batch_size)

    use_val = validation is not None and len(validation) > 0
    best = (-1.0, None, None)
    bad = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(steps):
            idx = order[s * cfg.batch_size:(s + 1) * cfg.batch_size]
            users, pos = pairs[idx, 0], pairs[idx, 1]
            neg = sample_negatives(rng, users, train.n_items, keys)
            loss, g_user, g_item = bpr_loss_and_grads(params["user"], params["item"], users, pos, neg, cfg.reg)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            opt.step({"user": g_user, "item": g_item})
            epoch_loss += loss * len(idx)
        epoch_loss /= n
        if not (math.isfinite(epoch_loss) and np.isfinite(params["user"]).all() and np.isfinite(params["item"]).all()):
            raise DivergenceError(epoch, epoch_loss)

        if not use_val:
            model.history.append((epoch, epoch_loss, math.nan))
            model.best_epoch = epoch
            continue
        score = evaluate_model(model, validation, train, cfg.k)
        model.history.append((epoch, epoch_loss, score))
        if score > best[0]:
            best = (score, params["user"].copy(), params["item"].copy())
            model.best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                logger.info("early stop at epoch %d (best %d, NDCG %.4f)", epoch, model.best_epoch, best[0])
                break

    if use_val:
        model.user_emb, model.item_emb = best[1], best[2]
    return model


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_model(model: BprModel, path) -> None:
    """Delimited-text dump: a ``#`` header line then one row per embedding."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(f"# bpr-mf d={model.dim} n_users={model.n_users} n_items={model.n_items} "
                 f"seed={model.seed} best_epoch={model.best_epoch}\n")
        for kind, mat in (("user", model.user_emb), ("item", model.item_emb)):
            for i, row in enumerate(mat):
                fh.write(",".join([kind, str(i), *map(repr, row.tolist())]) + "\n")


def load_model(path) -> BprModel:
    with Path(path).open() as fh:
        header = dict(tok.split("=") for tok in fh.readline().lstrip("#").split()[1:])
        d, nu, ni = int(header["d"]), int(header["n_users"]), int(header["n_items"])
        user = np.empty((nu, d))
        item = np.empty((ni, d))
        for line in fh:
            kind, idx, *vals = line.rstrip("\n").split(",")
            (user if kind == "user" else item)[int(idx)] = np.array(vals, dtype=float)
    return BprModel(user, item, seed=int(header["seed"]), best_epoch=int(header.get("best_epoch", 0)))

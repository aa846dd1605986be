"""Feed-forward attribute-inference attacker on binary preference vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import GroupPartition, InteractionDataset, kfold_user_split, to_preference_vectors
from .errors import DegenerateLabelsError, DimensionError, PrefObfError
from .optim import Adam

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class AttackConfig:
    hidden: int = 128
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    class_weight: str = "balanced"
    activation: str = "relu"
    init_std: float = 0.01

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("hidden, epochs and batch_size must be positive")
        if self.lr <= 0 or self.init_std <= 0:
            raise ValueError("lr and init_std must be positive")
        if self.class_weight not in ("balanced", "none"):
            raise ValueError(f"class_weight must be 'balanced' or 'none', got {self.class_weight!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")


@dataclass(eq=False)
class AttackerModel:
    """Two-layer perceptron ``[n_items, hidden, 2]``."""

    params: dict[str, np.ndarray]
    activation: str = "relu"

    @property
    def n_inputs(self) -> int:
        return self.params["w1"].shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.n_inputs:
            raise DimensionError(f"expected vectors of length {self.n_inputs}, got {x.shape[1]}")
        return _forward(self.params, x, self.activation)[0]

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return predict_from_logits(self.logits(x))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_from_logits(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels (argmax, ties to class 0) and class probabilities."""
    logits = np.atleast_2d(logits)
    # argmax returns the first maximum, i.e. class 0 on ties
    return logits.argmax(axis=1), softmax(logits)


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z, a, kind):
    return (z > 0).astype(z.dtype) if kind == "relu" else 1.0 - a * a


def _forward(params, x, activation):
    z1 = x @ params["w1"] + params["b1"]
    a1 = _act(z1, activation)
    return a1 @ params["w2"] + params["b2"], (z1, a1)


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights ``N / (2 * N_g)``."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=2)
    if (counts == 0).any():
        raise DegenerateLabelsError(f"both classes must be present, counts {tuple(counts)}")
    return len(labels) / (2.0 * counts)


def loss_and_grads(params: dict, x: np.ndarray, y: np.ndarray, weights: np.ndarray,
                   activation: str = "relu"):
    """Class-weighted cross-entropy, normalised by the summed sample weights."""
    logits, (z1, a1) = _forward(params, x, activation)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    w = weights[y]
    wsum = w.sum()
    rows = np.arange(len(y))
    loss = float(-(w * log_p[rows, y]).sum() / wsum)

    dlogits = np.exp(log_p)
    dlogits[rows, y] -= 1.0
    dlogits *= (w / wsum)[:, None]
    grads = {
        "w2": a1.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dz1 = (dlogits @ params["w2"].T) * _act_grad(z1, a1, activation)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads


def init_params(n_inputs: int, hidden: int, rng: np.random.Generator, std: float = 0.01) -> dict:
    return {
        "w1": rng.normal(0.0, std, size=(n_inputs, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, std, size=(hidden, 2)),
        "b2": np.zeros(2),
    }


def train_attacker(vectors: np.ndarray, labels: np.ndarray, cfg: AttackConfig) -> AttackerModel:
    """Mini-batch Adam for a fixed number of epochs; returns the final model."""
    x = np.asarray(vectors, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DegenerateLabelsError("training labels contain a single class")
    weights = class_weights(y) if cfg.class_weight == "balanced" else np.ones(2)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(x.shape[1], cfg.hidden, rng, cfg.init_std)
    opt = Adam(params, lr=cfg.lr)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = loss_and_grads(params, x[idx], y[idx], weights, cfg.activation)
            opt.step(grads)
    return AttackerModel(params, cfg.activation)


def balanced_accuracy(predictions, labels) -> float:
    """Mean of the two per-class recalls."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    recalls = []
    for c in (0, 1):
        mask = labels == c
        if not mask.any():
            raise DegenerateLabelsError(f"class {c} absent from labels; balanced accuracy undefined")
        recalls.append(float(np.mean(predictions[mask] == c)))
    return (recalls[0] + recalls[1]) / 2.0


@dataclass(frozen=True)
class AttackResult:
    mean: float
    per_fold: tuple[float, ...]
    skipped: tuple[int, ...] = field(default=())


def run_attack_cv(dataset: InteractionDataset, partition: GroupPartition, cfg: AttackConfig,
                  folds: int = 5, seed: int = 0, n_items: int | None = None) -> AttackResult:
    """User-level k-fold cross-validation of the attacker; mean BAcc over folds."""
    if len(partition) != dataset.n_users:
        raise ValueError("partition does not match the dataset's users")
    x = to_preference_vectors(dataset, n_items)
    y = partition.groups.astype(np.int64)
    scores, skipped = [], []
    for f, (train_u, test_u) in enumerate(kfold_user_split(np.arange(dataset.n_users), folds, seed)):
        if len(np.unique(y[train_u])) < 2 or len(np.unique(y[test_u])) < 2:
            logger.warning("fold %d lacks a class in train or test; skipped", f)
            skipped.append(f)
            continue
        model = train_attacker(x[train_u], y[train_u], cfg)
        pred, _ = model.predict(x[test_u])
        scores.append(balanced_accuracy(pred, y[test_u]))
    if not scores:
        raise PrefObfError("every fold was skipped")
    return AttackResult(float(np.mean(scores)), tuple(scores), tuple(skipped))

"""Supervised PQC training, evaluation, and the counterfactual retrain oracle.

Determinism contract: given the same template, data, and config the loop
produces bit-identical parameters.  The counterfactual retrain reuses the
original initialization seed so the audit compares optimization paths, not
initializations.
"""

from dataclasses import dataclass, field

import numpy as np

from qmulab import geo, pqc


@dataclass(frozen=True)
class LossSpec:
    kind: str = "mse"

    def __post_init__(self):
        if self.kind not in ("mse", "logistic"):
            raise ValueError(f"unknown loss kind {self.kind!r}")


@dataclass
class Dataset:
    """Feature matrix with +-1 labels, train/test split tags, and forget mask."""

    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray  # "train" / "test" per row
    forget_mask: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.split = np.asarray(self.split, dtype=object)
        self.forget_mask = np.asarray(self.forget_mask, dtype=bool)
        n = len(self.features)
        if not (len(self.labels) == len(self.split) == len(self.forget_mask) == n):
            raise ValueError("dataset columns have inconsistent lengths")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        if not np.all(np.isin(self.split, ("train", "test"))):
            raise ValueError("split tags must be 'train' or 'test'")
        if np.any(self.forget_mask & (self.split == "test")):
            raise ValueError("forget mask may only cover train rows")

    @property
    def n_features(self):
        return self.features.shape[1]

    def indices(self, split):
        return np.flatnonzero(self.split == split)

    def train_indices(self):
        return self.indices("train")

    def test_indices(self):
        return self.indices("test")

    def forget_indices(self):
        return np.flatnonzero(self.forget_mask)

    def retained_train_indices(self):
        return np.flatnonzero((self.split == "train") & ~self.forget_mask)

    def rows(self, idx):
        return self.features[idx], self.labels[idx]

    def without_forgotten(self):
        """Copy with D_r rows dropped (the counterfactual's training data)."""
        keep = ~self.forget_mask
        return Dataset(
            features=self.features[keep],
            labels=self.labels[keep],
            split=self.split[keep],
            forget_mask=np.zeros(int(keep.sum()), dtype=bool),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 150
    batch_size: int = 16
    optimizer: str = "gd"  # "gd" | "natural"
    damping: float = 1e-3
    patience: int = None  # epochs without improvement before stopping; None = run all
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("gd", "natural"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainedModel:
    template: pqc.CircuitTemplate
    theta: pqc.ParamVector
    loss_trace: list
    seed: int


def init_params(n_params, seed):
    rng = np.random.default_rng(seed)
    return pqc.ParamVector(rng.uniform(-np.pi, np.pi, size=n_params))


def _epoch_order(n, master_seed, epoch):
    # Per-epoch shuffle seed derived from the master seed; reproducible.
    rng = np.random.default_rng([int(master_seed), 1315423911, int(epoch)])
    return rng.permutation(n)


def _fit(t, features, labels, cfg, theta0=None, coord_mask=None):
    """Mini-batch descent core shared by train and partial fine-tuning.

    coord_mask, when given, freezes all coordinates outside the mask.
    """
    n = len(features)
    if n == 0:
        raise ValueError("training split must be non-empty")
    theta = (theta0 if theta0 is not None else init_params(t.n_params, cfg.seed)).values.copy()
    trace = []
    best = np.inf
    stale = 0
    for epoch in range(cfg.epochs):
        order = _epoch_order(n, cfg.seed, epoch)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = (features[idx], labels[idx])
            g = geo.parameter_shift_gradient(t, theta, batch, cfg.loss)
            if cfg.optimizer == "natural":
                F = geo.batch_qfim(t, theta, batch[0], mode="diagonal")
                step = geo.damped_inverse(F, cfg.damping) @ g.values
            else:
                step = g.values
            if coord_mask is not None:
                step = np.where(coord_mask, step, 0.0)
            theta = theta - cfg.learning_rate * step
        epoch_loss = geo.batch_loss(t, theta, (features, labels), cfg.loss)
        trace.append(float(epoch_loss))
        if epoch_loss < best - 1e-12:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    return pqc.ParamVector(theta), trace


def train(t, data, cfg):
    """Train on the full train split (including any forget-masked rows)."""
    idx = data.train_indices()
    if len(idx) == 0:
        raise ValueError("training split must be non-empty")
    theta, trace = _fit(t, *data.rows(idx), cfg)
    return TrainedModel(template=t, theta=theta, loss_trace=trace, seed=cfg.seed)


def retrain_counterfactual(t, data, cfg):
    """Train with D_r excluded, from the same initialization seed."""
    idx = data.retained_train_indices()
    if len(idx) == 0:
        raise ValueError("retained training split must be non-empty")
    theta, trace = _fit(t, *data.rows(idx), cfg)
    return TrainedModel(template=t, theta=theta, loss_trace=trace, seed=cfg.seed)


def fine_tune(model, features, labels, cfg, coord_mask=None):
    """Continue training from the model's parameters on the given rows."""
    if cfg.epochs == 0 or len(features) == 0:
        return model
    theta, trace = _fit(
        model.template, features, labels, cfg, theta0=model.theta, coord_mask=coord_mask
    )
    return replace_theta(model, theta, model.loss_trace + trace)


def replace_theta(model, theta, loss_trace=None):
    return TrainedModel(
        template=model.template,
        theta=theta,
        loss_trace=model.loss_trace if loss_trace is None else loss_trace,
        seed=model.seed,
    )


def evaluate(model, data, split, loss=None):
    """Loss and sign-accuracy on a split; sign(0) counts as +1."""
    idx = data.indices(split) if isinstance(split, str) else np.asarray(split)
    if len(idx) == 0:
        raise ValueError("evaluation split must be non-empty")
    xs, ys = data.rows(idx)
    loss = loss or LossSpec()
    preds = pqc.predict_batch(model.template, model.theta, xs)
    signs = np.where(preds >= 0, 1, -1)
    return {
        "loss": float(geo.batch_loss(model.template, model.theta, (xs, ys), loss)),
        "accuracy": float(np.mean(signs == ys)),
    }

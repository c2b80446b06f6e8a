"""Losses, gradient descent, logistic models and finite-difference checks.

Everything here runs in double precision with plain mini-batch gradient
descent under a fixed learning rate, so seeded runs are bitwise
reproducible and every analytic gradient in the repo can be validated
against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLabels,
    InvalidArgument,
    InvalidDistribution,
    InvalidLoss,
    NotTrained,
)

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidArgument("learning rate must be positive")
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidArgument("batch size must be >= 1")
        if self.l2 < 0:
            raise InvalidArgument("l2 penalty must be >= 0")


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log likelihood of the labeled class, clamped at 1e-12."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or label < 0 or label >= probs.size:
        raise InvalidDistribution("label out of range for distribution")
    if np.any(probs < -1e-9) or abs(probs.sum() - 1.0) > 1e-6:
        raise InvalidDistribution("probabilities must be non-negative and sum to 1")
    return float(-np.log(max(probs[label], PROB_CLAMP)))


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


@dataclass
class LogisticModel:
    """Multinomial logistic regression; binary is the two-class case."""

    weights: np.ndarray | None = None  # (K, d)
    bias: np.ndarray | None = None  # (K,)
    classes: np.ndarray | None = None  # original label values, sorted
    loss_trace: list = field(default_factory=list)

    @property
    def fitted(self) -> bool:
        return self.weights is not None

    def decision(self, x: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise NotTrained("logistic model has not been trained")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.weights.T + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax_rows(self.decision(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        idx = np.argmax(self.predict_proba(x), axis=1)
        return self.classes[idx]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "classes": self.classes.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(
            weights=np.array(d["weights"], dtype=float),
            bias=np.array(d["bias"], dtype=float),
            classes=np.array(d["classes"]),
        )


def _mean_ce_loss(w, b, x, y_idx, l2):
    probs = softmax_rows(x @ w.T + b)
    picked = np.clip(probs[np.arange(x.shape[0]), y_idx], PROB_CLAMP, None)
    return float(-np.log(picked).mean() + 0.5 * l2 * np.sum(w * w))


def train_logistic(x: np.ndarray, y, cfg: TrainConfig) -> LogisticModel:
    """Mini-batch gradient descent on mean cross-entropy with l2 on weights."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidArgument("X and y shapes are inconsistent")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateLabels("need at least two classes present")
    y_idx = np.searchsorted(classes, y)
    n, d = x.shape
    k = classes.size
    w = np.zeros((k, d))
    b = np.zeros(k)
    rng = np.random.default_rng(cfg.seed)
    trace = [_mean_ce_loss(w, b, x, y_idx, cfg.l2)]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb = x[batch]
            probs = softmax_rows(xb @ w.T + b)
            probs[np.arange(batch.size), y_idx[batch]] -= 1.0
            dlogits = probs / batch.size
            w -= cfg.lr * (dlogits.T @ xb + cfg.l2 * w)
            b -= cfg.lr * dlogits.sum(axis=0)
        trace.append(_mean_ce_loss(w, b, x, y_idx, cfg.l2))
    model = LogisticModel(weights=w, bias=b, classes=classes)
    model.loss_trace = trace
    return model


def grad_check(loss_fn, params: dict[str, np.ndarray], eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn(params) must return (loss, grads) deterministically; grads is a
    dict matching params.  Non-finite or non-reproducible losses are
    rejected.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise InvalidArgument("eps must be in [1e-7, 1e-4]")
    loss_a, grads = loss_fn(params)
    loss_b, _ = loss_fn(params)
    if not (np.isfinite(loss_a) and np.isfinite(loss_b)):
        raise InvalidLoss("loss is not finite")
    if loss_a != loss_b:
        raise InvalidLoss("loss is not deterministic")
    worst = 0.0
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=float)
        flat = np.atleast_1d(value.reshape(-1))
        gflat = np.atleast_1d(grad.reshape(-1))
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = loss_fn(params)
            flat[i] = orig - eps
            down, _ = loss_fn(params)
            flat[i] = orig
            cd = (up - down) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(cd), 1e-8)
            worst = max(worst, abs(gflat[i] - cd) / denom)
    return worst


def write_training_log(path, trace: list[float], seed: int):
    """Line-delimited JSON: one record per epoch."""
    with open(path, "w") as fh:
        for epoch, loss in enumerate(trace):
            fh.write(json.dumps({"epoch": epoch, "loss": loss, "seed": seed}) + "\n")

"""Logistic-regression linear probes, one per BSP."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DimensionError
from .metrics import f1
from .numerics import Adam, check_finite


@dataclass
class LinearProbe:
    weights: np.ndarray
    bias: float
    bsp: int = 0

    def logits(self, acts) -> np.ndarray:
        return np.asarray(acts, dtype=np.float64) @ self.weights + self.bias

    def predict(self, acts) -> np.ndarray:
        # probability ≥ 0.5 exactly when the logit is ≥ 0
        return self.logits(acts) >= 0.0


@dataclass
class ProbeConfig:
    l2: float = 1e-4
    lr: float = 1e-2
    steps: int = 500
    class_weight: bool = False  # inverse-frequency weighting of positives and negatives
    standardize: bool = True
    seed: int = 0


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_probe(acts, labels, config: ProbeConfig = ProbeConfig(), bsp: int = 0) -> LinearProbe:
    """Full-batch Adam on the L2-regularised mean logistic loss."""
    X = np.asarray(acts, dtype=np.float64)
    y = np.asarray(labels).astype(np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionError(f"activations {X.shape} do not match {y.shape[0]} labels")
    pos = y.sum()
    if pos == 0 or pos == y.size:
        raise DegenerateDataError(f"BSP {bsp}: training labels contain a single class")
    if config.class_weight:
        sw = np.where(y > 0, 0.5 / (pos / y.size), 0.5 / (1 - pos / y.size))
    else:
        sw = np.ones_like(y)
    mu = X.mean(axis=0) if config.standardize else np.zeros(X.shape[1])
    sd = X.std(axis=0) if config.standardize else np.ones(X.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd

    rng = np.random.default_rng(config.seed)
    params = {"w": 0.01 * rng.standard_normal(X.shape[1]), "b": np.zeros(1)}
    opt = Adam(config.lr)
    n = y.size
    for _ in range(config.steps):
        p = _sigmoid(Z @ params["w"] + params["b"][0])
        r = sw * (p - y) / n
        grads = {"w": Z.T @ r + 2 * config.l2 * params["w"], "b": np.array([r.sum()])}
        params = opt.step(params, grads, config.lr)
    w = params["w"] / sd
    check_finite(w, "probe weights")
    b = float(params["b"][0] - np.dot(w, mu))
    return LinearProbe(w, b, bsp)


def probe_f1(probe: LinearProbe, acts, labels) -> float:
    acts = np.asarray(acts)
    if acts.ndim != 2 or acts.shape[1] != probe.weights.shape[0]:
        raise DimensionError("probe width does not match activations")
    return f1(probe.predict(acts), labels)


def train_probes(acts, labels, config: ProbeConfig = ProbeConfig()) -> list:
    """One probe per label column; single-class columns are skipped."""
    labels = np.asarray(labels)
    out = []
    for g in range(labels.shape[1]):
        try:
            out.append(train_probe(acts, labels[:, g], config, bsp=g))
        except DegenerateDataError:
            continue
    return out

"""Planted-dictionary superposition data with known ground-truth features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GroundTruthDictionary:
    vectors: np.ndarray  # (m_true, d), unit rows
    k: int = 3
    mag_low: float = 0.5
    mag_high: float = 1.5
    noise: float = 0.0
    seed: int = 0

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def m_true(self) -> int:
        return self.vectors.shape[0]


@dataclass
class SyntheticSample:
    x: np.ndarray             # (count, d)
    active: np.ndarray        # (count, m_true) bool
    coefficients: np.ndarray  # (count, m_true)


def make_dictionary(d: int = 16, m_true: int = 64, k: int = 3, noise: float = 0.0, seed: int = 0,
                    mag_low: float = 0.5, mag_high: float = 1.5) -> GroundTruthDictionary:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((m_true, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return GroundTruthDictionary(v, k, mag_low, mag_high, noise, seed)


def sample_activations(dictionary: GroundTruthDictionary, count: int, seed: int = 0) -> SyntheticSample:
    """Each row is a sum of ``k`` distinct dictionary vectors with uniform magnitudes, plus optional noise."""
    m, k = dictionary.m_true, dictionary.k
    if not 0 <= k <= m:
        raise ValueError("k must lie in [0, m_true]")
    rng = np.random.default_rng(seed)
    coef = np.zeros((count, m))
    if k > 0:
        # k distinct indices per row: argsort of uniform keys
        idx = np.argpartition(rng.random((count, m)), k - 1, axis=1)[:, :k]
        mags = rng.uniform(dictionary.mag_low, dictionary.mag_high, size=(count, k))
        np.put_along_axis(coef, idx, mags, axis=1)
    x = coef @ dictionary.vectors
    if dictionary.noise > 0:
        x = x + dictionary.noise * rng.standard_normal(x.shape)
    return SyntheticSample(x, coef > 0, coef)


def match_features(learned_columns: np.ndarray, true_vectors: np.ndarray, threshold: float = 0.9):
    """Best cosine per true feature against learned (d, m) columns.

    Returns ``(mean_max_cosine, recovery_rate, per_feature_max)``; matching is
    an unconstrained max, so one learned column may explain several features.
    """
    W = np.asarray(learned_columns, dtype=np.float64)
    T = np.asarray(true_vectors, dtype=np.float64)
    if W.shape[0] != T.shape[1]:
        raise ValueError(f"dimension mismatch: learned {W.shape}, true {T.shape}")
    Wn = W / np.maximum(np.linalg.norm(W, axis=0, keepdims=True), 1e-300)
    Tn = T / np.maximum(np.linalg.norm(T, axis=1, keepdims=True), 1e-300)
    best = (Tn @ Wn).max(axis=1)
    return float(best.mean()), float(np.mean(best >= threshold)), best



@dataclass
class Readout:
    """Frozen multi-label logistic model from activations to active features."""

    W: np.ndarray  # (d, m_true)
    b: np.ndarray  # (m_true,)

    def loss(self, x, active) -> float:
        z = np.asarray(x, dtype=np.float64) @ self.W + self.b
        y = np.asarray(active, dtype=np.float64)
        # log(1 + e^z) - y z, stable for large |z|
        return float(np.mean(np.logaddexp(0.0, z) - y * z))


def fit_readout(sample: SyntheticSample, steps: int = 300, lr: float = 0.05, seed: int = 0) -> Readout:
    """Full-batch Adam on clean activations; stands in for the downstream model on synthetic data."""
    from .numerics import Adam

    x, y = sample.x, sample.active.astype(np.float64)
    rng = np.random.default_rng(seed)
    params = {"W": 0.01 * rng.standard_normal((x.shape[1], y.shape[1])), "b": np.zeros(y.shape[1])}
    opt = Adam(lr)
    for _ in range(steps):
        z = x @ params["W"] + params["b"]
        r = (0.5 * (1.0 + np.tanh(0.5 * z)) - y) / y.size
        params = opt.step(params, {"W": x.T @ r, "b": r.sum(axis=0)}, lr)
    return Readout(params["W"], params["b"])


def readout_loss_triple(readout: Readout, sample: SyntheticSample, x_hat):
    """``(H_orig, H_patched, H_zero)`` under a frozen readout, for loss recovered."""
    h = lambda x: readout.loss(x, sample.active)
    return h(sample.x), h(x_hat), h(np.zeros_like(sample.x))

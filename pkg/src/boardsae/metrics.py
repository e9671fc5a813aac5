"""Supervised (coverage, board reconstruction) and unsupervised (L0, loss recovered, γ) SAE metrics.

A feature ``i`` with training maximum ``f_max[i]`` becomes a binary classifier
at threshold fraction ``t`` by firing when ``f_i(x) > t * f_max[i]``.  Features
with ``f_max == 0`` are dead and never fire.

F1 is computed from counts as ``2 tp / (2 tp + fp + fn)``, so the vectorised
paths and a loop over samples produce the same floats.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError

THRESHOLDS = tuple(k / 10 for k in range(10))
PRECISION_BAR = 0.95
N_MIN = 5


class DeadFeaturesWarning(UserWarning):
    pass


def _f1_from_counts(tp, n_pred, n_true):
    """Element-wise F1 from integer-valued counts; 0 where nothing is predicted or true."""
    tp = np.asarray(tp, dtype=np.float64)
    denom = np.asarray(n_pred, dtype=np.float64) + np.asarray(n_true, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    return out


def f1(preds, labels) -> float:
    preds = np.asarray(preds).astype(bool).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    if preds.shape != labels.shape:
        raise DimensionError(f"{preds.size} predictions for {labels.size} labels")
    tp = int(np.count_nonzero(preds & labels))
    return float(_f1_from_counts(tp, preds.sum(), labels.sum()))


def mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def feature_max(acts: np.ndarray) -> np.ndarray:
    acts = np.asarray(acts, dtype=np.float64)
    if acts.shape[0] == 0:
        return np.zeros(acts.shape[1])
    return np.maximum(acts.max(axis=0), 0.0)


def binarize(acts: np.ndarray, f_max: np.ndarray, t: float) -> np.ndarray:
    """φ for every feature at one threshold; dead features are all-False."""
    acts = np.asarray(acts, dtype=np.float64)
    f_max = np.asarray(f_max, dtype=np.float64)
    if acts.shape[1] != f_max.shape[0]:
        raise DimensionError("activation width does not match f_max")
    return (acts > t * f_max) & (f_max > 0)


def _check_pair(acts, labels):
    acts = np.asarray(acts, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if acts.ndim != 2 or labels.ndim != 2 or acts.shape[0] != labels.shape[0]:
        raise DimensionError(f"activations {acts.shape} and labels {labels.shape} disagree")
    return acts, labels


def _counts(phi: np.ndarray, labels: np.ndarray):
    """(tp (m, G), predicted count (m,), positive count (G,)) as exact float64 integers."""
    p = phi.astype(np.float64)
    return p.T @ labels.astype(np.float64), p.sum(axis=0), labels.sum(axis=0).astype(np.float64)


# ---------------------------------------------------------------- coverage

@dataclass
class CoverageResult:
    per_bsp: np.ndarray         # best F1 per BSP, NaN where skipped
    best_feature: np.ndarray    # argmax feature per BSP (-1 if skipped)
    best_t: np.ndarray          # threshold of that feature (NaN if skipped)
    skipped: int                # BSPs with no positives
    mode: str
    global_t: Optional[float] = None

    @property
    def mean(self) -> float:
        kept = self.per_bsp[~np.isnan(self.per_bsp)]
        return mean(kept.tolist())


def coverage(acts, labels, f_max=None, mode: str = "per_pair", thresholds=THRESHOLDS) -> CoverageResult:
    """Mean over BSPs of the best single-feature F1.

    ``mode="per_pair"`` maximises over t for every (BSP, feature) pair;
    ``mode="global_t"`` sweeps one t shared by all BSPs and keeps the best mean.
    """
    acts, labels = _check_pair(acts, labels)
    if mode not in ("per_pair", "global_t"):
        raise ValueError("mode must be 'per_pair' or 'global_t'")
    f_max = feature_max(acts) if f_max is None else np.asarray(f_max, dtype=np.float64)
    G = labels.shape[1]
    positives = labels.sum(axis=0)
    keep = positives > 0
    if not np.any(f_max > 0):
        warnings.warn("every feature is dead; coverage is 0", DeadFeaturesWarning)

    table = np.full((len(thresholds), G), -1.0)
    arg = np.full((len(thresholds), G), -1, dtype=np.int64)
    for k, t in enumerate(thresholds):
        tp, n_pred, n_true = _counts(binarize(acts, f_max, t), labels)
        scores = _f1_from_counts(tp, n_pred[:, None], n_true[None, :])
        if scores.shape[0]:
            arg[k] = scores.argmax(axis=0)
            table[k] = scores[arg[k], np.arange(G)]
        else:
            table[k] = 0.0
    if mode == "per_pair":
        k_best = table.argmax(axis=0)
        global_t = None
    else:
        means = [mean(table[k, keep].tolist()) for k in range(len(thresholds))]
        k_best = np.full(G, int(np.argmax(means)))
        global_t = thresholds[k_best[0]] if G else None
    cols = np.arange(G)
    per_bsp = np.where(keep, table[k_best, cols], np.nan)
    best_feature = np.where(keep, arg[k_best, cols], -1)
    best_t = np.where(keep, np.asarray(thresholds)[k_best], np.nan)
    return CoverageResult(per_bsp, best_feature, best_t, int((~keep).sum()), mode, global_t)


# ---------------------------------------------------------------- reconstruction

@dataclass
class HighPrecisionMap:
    t: float
    f_max: np.ndarray
    members: np.ndarray  # bool (m, G): feature i is high precision for BSP g

    def features_for(self, g: int) -> list:
        return np.flatnonzero(self.members[:, g]).tolist()

    def __len__(self) -> int:
        return int(self.members.sum())


def build_high_precision_map(acts, labels, t: float, f_max=None, precision: float = PRECISION_BAR,
                             n_min: int = N_MIN) -> HighPrecisionMap:
    """Features whose φ at ``t`` has precision ≥ ``precision`` for a BSP and fires ≥ ``n_min`` times."""
    acts, labels = _check_pair(acts, labels)
    f_max = feature_max(acts) if f_max is None else np.asarray(f_max, dtype=np.float64)
    tp, n_pred, _ = _counts(binarize(acts, f_max, t), labels)
    support = n_pred[:, None] >= n_min
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = tp / np.where(support, n_pred[:, None], 1.0)
    members = support & (prec >= precision)
    return HighPrecisionMap(float(t), f_max, members)


def reconstruct(acts, hp_map: HighPrecisionMap) -> np.ndarray:
    """Predicted BSP bits: g is on when any of its mapped features fires."""
    phi = binarize(np.atleast_2d(acts), hp_map.f_max, hp_map.t).astype(np.float64)
    return (phi @ hp_map.members.astype(np.float64)) > 0


def board_f1(pred, labels):
    """Per-position F1 of predicted against true bits (empty entries not scored). NaN for empty boards."""
    pred = np.atleast_2d(np.asarray(pred).astype(bool))
    labels = np.atleast_2d(np.asarray(labels).astype(bool))
    tp = np.count_nonzero(pred & labels, axis=1)
    n_true = labels.sum(axis=1)
    scores = _f1_from_counts(tp, pred.sum(axis=1), n_true)
    return np.where(n_true > 0, scores, np.nan)


def _mean_kept(scores: np.ndarray) -> float:
    kept = scores[~np.isnan(scores)]
    return mean(kept.tolist())


@dataclass
class ReconstructionResult:
    score: float
    t: Optional[float]        # None in leak mode, where t varies per position
    train_scores: dict        # t -> training-split reconstruction
    skipped: int              # test positions with no true bits
    hp_map: Optional[HighPrecisionMap] = None


def reconstruction_score(train_acts, train_labels, test_acts, test_labels, leak: bool = False,
                         thresholds=THRESHOLDS, n_min: int = N_MIN,
                         precision: float = PRECISION_BAR) -> ReconstructionResult:
    """Mean per-position board F1 on the test split.

    The default picks one t on the training split; ``leak=True`` instead takes
    the best t separately for every test position.
    """
    train_acts, train_labels = _check_pair(train_acts, train_labels)
    test_acts, test_labels = _check_pair(test_acts, test_labels)
    f_max = feature_max(train_acts)
    maps = {t: build_high_precision_map(train_acts, train_labels, t, f_max, precision, n_min) for t in thresholds}
    skipped = int((test_labels.sum(axis=1) == 0).sum())
    train_scores = {t: _mean_kept(board_f1(reconstruct(train_acts, mp), train_labels)) for t, mp in maps.items()}
    if leak:
        per_t = np.stack([board_f1(reconstruct(test_acts, mp), test_labels) for mp in maps.values()])
        best = np.where(np.isnan(per_t[0]), np.nan, per_t.max(axis=0)) if per_t.size else per_t
        return ReconstructionResult(_mean_kept(best.ravel()), None, train_scores, skipped)
    t_best = max(thresholds, key=lambda t: (train_scores[t], -t))
    scores = board_f1(reconstruct(test_acts, maps[t_best]), test_labels)
    return ReconstructionResult(_mean_kept(scores), t_best, train_scores, skipped, maps[t_best])


# ---------------------------------------------------------------- unsupervised

def l0(acts) -> float:
    acts = np.asarray(acts)
    if acts.shape[0] == 0:
        return 0.0
    return float(np.count_nonzero(acts > 0, axis=1).mean())


@dataclass(frozen=True)
class LossRecovered:
    value: float
    out_of_range: bool  # outside [0, 1]; reported unclamped


def loss_recovered(h_orig: float, h_patched: float, h_zero: float) -> LossRecovered:
    denom = h_orig - h_zero
    if denom == 0:
        raise ZeroDivisionError("loss recovered undefined: zero ablation does not change the loss")
    value = (h_patched - h_zero) / denom
    return LossRecovered(float(value), not 0.0 <= value <= 1.0)


@dataclass(frozen=True)
class Gamma:
    value: float
    unstable: bool


def reconstruction_bias(x, x_hat, tol: float = 1e-12) -> Gamma:
    """γ = E‖x̂‖² / E⟨x̂, x⟩, the scale that best maps reconstructions back onto inputs."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionError(f"inputs {x.shape} and reconstructions {x_hat.shape} disagree")
    num = float(np.sum(x_hat * x_hat))
    den = float(np.sum(x_hat * x))
    scale = max(float(np.sum(x * x)), 1e-300)
    if abs(den) <= tol * scale:
        return Gamma(float("nan"), True)
    return Gamma(num / den, False)


# ---------------------------------------------------------------- report

@dataclass
class MetricsReport:
    bsp_names: list
    coverage_per_bsp: list
    coverage: float
    reconstruction: float
    l0: float
    loss_recovered: Optional[float] = None
    loss_recovered_out_of_range: bool = False
    gamma: Optional[float] = None
    gamma_unstable: bool = False
    coverage_thresholds: list = field(default_factory=list)
    reconstruction_t: Optional[float] = None
    skipped_bsps: int = 0
    skipped_positions: int = 0
    split_sizes: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        clean = lambda v: None if isinstance(v, float) and math.isnan(v) else v
        return {
            "coverage": clean(self.coverage),
            "reconstruction": clean(self.reconstruction),
            "l0": self.l0,
            "loss_recovered": clean(self.loss_recovered),
            "loss_recovered_out_of_range": self.loss_recovered_out_of_range,
            "gamma": clean(self.gamma),
            "gamma_unstable": self.gamma_unstable,
            "reconstruction_t": self.reconstruction_t,
            "skipped_bsps": self.skipped_bsps,
            "skipped_positions": self.skipped_positions,
            "split_sizes": self.split_sizes,
            "per_bsp": [
                {"bsp": n, "coverage": clean(float(c)), "t": clean(float(t)) if t is not None else None}
                for n, c, t in zip(self.bsp_names, self.coverage_per_bsp,
                                   self.coverage_thresholds or [None] * len(self.bsp_names))
            ],
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bsp", "coverage", "t"])
            for row in self.to_dict()["per_bsp"]:
                w.writerow([row["bsp"], "" if row["coverage"] is None else row["coverage"],
                            "" if row["t"] is None else row["t"]])

"""Slow reference implementations used as test oracles."""
import math

import numpy as np

from boardsae.sae import gradients, loss_gated, loss_standard


# ---------------------------------------------------------------- finite differences

def _loss_fn(params, x, lam, p, squared, frozen):
    if params.variant == "standard":
        return lambda pr: loss_standard(pr, x, lam, p, squared).total
    return lambda pr: loss_gated(pr, x, lam, p, frozen_decoder=frozen).total


def numeric_gradients(params, x, lam, p=1.0, squared=False, h=1e-6):
    frozen = (params.W_dec.copy(), params.b_dec.copy())
    fn = _loss_fn(params, x, lam, p, squared, frozen)
    out = {}
    for name, t in params.tensors().items():
        g = np.zeros_like(t)
        for idx in np.ndindex(t.shape):
            plus, minus = t.copy(), t.copy()
            plus[idx] += h
            minus[idx] -= h
            g[idx] = (fn(params.replace(**{name: plus})) - fn(params.replace(**{name: minus}))) / (2 * h)
        out[name] = g
    return out


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def kink_margin(params, x):
    """Smallest distance of any pre-activation (or residual norm) from a non-differentiable point."""
    c = x - params.b_dec
    if params.variant == "standard":
        pres = [c @ params.W_enc.T + params.b_enc]
    else:
        pres = [c @ params.W_gate.T + params.b_gate, c @ params.magnitude_weights().T + params.b_mag]
    return min(float(np.min(np.abs(p))) for p in pres)


def gradcheck(params, x, lam, p=1.0, squared=False):
    _, analytic, _ = gradients(params, x, lam, p, squared)
    numeric = numeric_gradients(params, x, lam, p, squared)
    return max(relative_error(analytic[k], numeric[k]) for k in numeric)


# ---------------------------------------------------------------- metrics

def f1_counts(pred, true):
    tp = fp = fn = 0
    for a, b in zip(pred, true):
        if a and b:
            tp += 1
        elif a:
            fp += 1
        elif b:
            fn += 1
    d = 2 * tp + fp + fn
    return 0.0 if d == 0 else 2 * tp / d


def brute_coverage(acts, labels, f_max, thresholds):
    S, m = acts.shape
    G = labels.shape[1]
    best = []
    for g in range(G):
        col = [bool(labels[s, g]) for s in range(S)]
        if not any(col):
            continue
        top = 0.0
        for t in thresholds:
            for i in range(m):
                if f_max[i] <= 0:
                    phi = [False] * S
                else:
                    phi = [acts[s, i] > t * f_max[i] for s in range(S)]
                top = max(top, f1_counts(phi, col))
        best.append(top)
    return math.fsum(best) / len(best) if best else 0.0


def brute_map(acts, labels, f_max, t, precision=0.95, n_min=5):
    S, m = acts.shape
    members = {}
    for i in range(m):
        if f_max[i] <= 0:
            continue
        fires = [s for s in range(S) if acts[s, i] > t * f_max[i]]
        if len(fires) < n_min:
            continue
        for g in range(labels.shape[1]):
            tp = sum(1 for s in fires if labels[s, g])
            if tp / len(fires) >= precision:
                members.setdefault(g, set()).add(i)
    return members


def brute_board_scores(acts, labels, f_max, t, members):
    scores = []
    for s in range(acts.shape[0]):
        true = [bool(v) for v in labels[s]]
        if not any(true):
            continue
        pred = [any(f_max[i] > 0 and acts[s, i] > t * f_max[i] for i in members.get(g, ()))
                for g in range(labels.shape[1])]
        scores.append(f1_counts(pred, true))
    return scores


def brute_reconstruction(train_acts, train_labels, test_acts, test_labels, thresholds, n_min=5):
    f_max = [max(0.0, float(train_acts[:, i].max())) for i in range(train_acts.shape[1])]
    best_t, best_score = None, -1.0
    for t in thresholds:
        mem = brute_map(train_acts, train_labels, f_max, t, n_min=n_min)
        sc = brute_board_scores(train_acts, train_labels, f_max, t, mem)
        val = math.fsum(sc) / len(sc) if sc else 0.0
        if val > best_score:
            best_t, best_score = t, val
    mem = brute_map(train_acts, train_labels, f_max, best_t, n_min=n_min)
    sc = brute_board_scores(test_acts, test_labels, f_max, best_t, mem)
    return (math.fsum(sc) / len(sc) if sc else 0.0), best_t

"""Lp sparsity penalty, the p schedule and coefficient annealing."""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class DeadFeaturesWarning(RuntimeWarning):
    pass


def power_sum(f, p: float) -> float:
    """Sum of ``f**p`` over all entries, with ``0**p == 0``."""
    f = np.asarray(f, dtype=np.float64)
    pos = f[f > 0]
    if pos.size == 0:
        return 0.0
    return float(np.sum(pos**p))


def sparsity_penalty(f, p: float, lam: float) -> float:
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if lam < 0:
        raise ValueError("sparsity coefficient must be non-negative")
    return lam * power_sum(f, p)


def linear_p(step: int, start: int, final_step: int, p_end: float) -> float:
    if step < start or final_step <= start:
        return 1.0
    if step >= final_step:
        return p_end  # exact, not 1 - (1 - p_end)
    return 1.0 - (1.0 - p_end) * (step - start) / (final_step - start)


def p_schedule(step: int, config) -> float:
    """Exponent at ``step`` for a run described by ``config``.

    p stays at 1 until ``config.anneal_start``, then falls linearly to
    ``config.p_end`` at the final step (``total_steps - 1``). Runs with
    annealing disabled keep p = 1 throughout.
    """
    if not getattr(config, "anneal", True):
        return 1.0
    return linear_p(step, config.anneal_start, config.total_steps - 1, config.p_end)


@dataclass
class AnnealState:
    step: int
    p: float
    lam: float
    queue_len: int = 10
    queue: deque = field(default=None)

    def __post_init__(self):
        if self.queue is None:
            self.queue = deque(maxlen=self.queue_len)

    def push(self, f) -> None:
        # zeros contribute nothing to any power sum, so only positives are kept
        f = np.asarray(f, dtype=np.float64)
        self.queue.append([f[f > 0].copy(), {}])

    def queue_power_sum(self, p: float) -> float:
        total = 0.0
        for entry in self.queue:
            vals, memo = entry
            if p not in memo:
                if len(memo) > 1:
                    memo.clear()
                memo[p] = power_sum(vals, p)
            total += memo[p]
        return total


def lambda_update(state: AnnealState, p_next: float) -> float:
    """Rescale the coefficient so the queued penalty is unchanged by the p step."""
    if not state.queue:
        raise ValueError("coefficient update needs at least one queued batch")
    if p_next == state.p:
        return state.lam
    num = state.queue_power_sum(state.p)
    den = state.queue_power_sum(p_next)
    if den == 0.0:
        warnings.warn("all queued feature activations are zero; keeping coefficient", DeadFeaturesWarning)
        return state.lam
    return state.lam * num / den

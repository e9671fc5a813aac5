"""Adam training loop with linear warmup, column-norm constraint and p-annealing."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from ..errors import NumericError
from ..numerics import Adam
from .anneal import AnnealState, lambda_update, p_schedule
from .losses import gradients
from .model import SaeParams, init_params, unit_columns

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    # full-scale defaults; desk-scale runs override token_budget and anneal_start
    token_budget: int = 300_000_000
    batch_size: int = 8192
    lr: float = 3e-4
    warmup_steps: int = 1000
    expansion_factor: int = 8
    lam_init: float = 0.1
    anneal_start: int = 10_000
    p_end: float = 0.2
    queue_len: int = 10
    seed: int = 0
    variant: str = "standard"
    anneal: bool = True
    squared_recon: bool = False
    tied_gate: bool = False
    lambda_every: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    log_every: int = 1

    def __post_init__(self):
        if not 0 < self.p_end <= 1:
            raise ValueError("p_end must lie in (0, 1]")
        if self.lam_init < 0:
            raise ValueError("lam_init must be non-negative")
        if self.batch_size <= 0 or self.token_budget < self.batch_size:
            raise ValueError("token budget must cover at least one batch")
        if self.anneal and self.anneal_start >= self.total_steps:
            raise ValueError("anneal_start must precede the final step")

    @property
    def total_steps(self) -> int:
        return self.token_budget // self.batch_size

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class DivergenceError(NumericError):
    def __init__(self, message, params=None, step=None, log_rows=None):
        super().__init__(message)
        self.params = params
        self.step = step
        self.log_rows = log_rows or []


@dataclass
class TrainResult:
    params: SaeParams
    config: TrainConfig
    log: list = field(default_factory=list)
    anneal: Optional[AnnealState] = None
    dead_features: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def final(self) -> dict:
        return self.log[-1] if self.log else {}


def _batches(data: np.ndarray, batch_size: int, rng: np.random.Generator):
    n = data.shape[0]
    while True:
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield data[order[start:start + batch_size]]


def learning_rate(step: int, config: TrainConfig) -> float:
    if config.warmup_steps > 0 and step < config.warmup_steps:
        return config.lr * (step + 1) / config.warmup_steps
    return config.lr


def project_out_parallel(grad_dec: np.ndarray, W_dec: np.ndarray) -> np.ndarray:
    """Remove the gradient component along each (unit) decoder column."""
    return grad_dec - np.sum(grad_dec * W_dec, axis=0, keepdims=True) * W_dec


def train(config: TrainConfig, data: Union[np.ndarray, Iterable[np.ndarray]],
          init: Optional[SaeParams] = None, callback=None) -> TrainResult:
    """Train an SAE on ``data``: an (N, n) array (shuffled per epoch) or an iterable of batches.

    ``callback(step, params, state)`` is invoked after every optimizer step.
    """
    rng = np.random.default_rng(config.seed)
    if isinstance(data, np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.shape[0] < config.batch_size:
            raise ValueError("dataset smaller than one batch")
        n = data.shape[1]
        batches = _batches(data, config.batch_size, rng)
        epoch_steps = max(1, data.shape[0] // config.batch_size)
    else:
        batches = iter(data)
        first = np.asarray(next(batches), dtype=np.float64)
        n = first.shape[1]
        batches = _chain(first, batches)
        epoch_steps = config.total_steps
    m = config.expansion_factor * n
    params = init if init is not None else init_params(
        n, m, config.variant, seed=config.seed, tied=config.tied_gate)
    params = params.copy()
    m = params.m
    opt = Adam(config.lr, config.beta1, config.beta2)
    state = AnnealState(step=0, p=p_schedule(0, config), lam=config.lam_init, queue_len=config.queue_len)
    rows = []
    fired = np.zeros(m, dtype=bool)
    dead = np.zeros(0, dtype=int)
    for step in range(config.total_steps):
        x = next(batches)
        try:
            out, grads, acts = gradients(params, x, state.lam, state.p, config.squared_recon)
        except NumericError as exc:
            raise DivergenceError(f"non-finite gradient at step {step}", params, step, rows) from exc
        if not np.isfinite(out.total):
            raise DivergenceError(f"loss diverged at step {step}", params, step, rows)
        if step % config.log_every == 0 or step == config.total_steps - 1:
            rows.append({"step": step, "p": state.p, "lam": state.lam, "loss": out.total,
                         "reconstruction": out.reconstruction, "sparsity": out.sparsity,
                         "auxiliary": out.auxiliary, "l0": out.l0, "lr": learning_rate(step, config)})
        fired |= (acts > 0).any(axis=0)
        if (step + 1) % epoch_steps == 0:
            dead = np.flatnonzero(~fired)
            fired[:] = False

        grads["W_dec"] = project_out_parallel(grads["W_dec"], params.W_dec)
        new = opt.step(params.tensors(), grads, learning_rate(step, config))
        new["W_dec"] = unit_columns(new["W_dec"])
        params = params.replace(**new)

        state.push(acts)
        if (step + 1) % config.lambda_every == 0:
            p_next = p_schedule(step + 1, config)
            if p_next != state.p:
                state.lam = lambda_update(state, p_next)
                state.p = p_next
        state.step = step + 1
        if callback is not None:
            callback(step, params, state)
    if config.total_steps < epoch_steps:
        dead = np.flatnonzero(~fired)
    return TrainResult(params, config, rows, state, dead)


def _chain(first, rest):
    yield first
    yield from rest

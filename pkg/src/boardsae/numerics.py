"""Dense float64 kernels and an Adam optimizer.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Products go
through a single BLAS call per operation, so for a fixed build and thread
count the results are bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def check_finite(x: np.ndarray, what: str = "array") -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite entries in {what}")


@dataclass
class AdamState:
    """Moment buffers for one parameter tensor."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param: np.ndarray, **kwargs) -> "AdamState":
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64), **kwargs)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected Adam update. Returns ``(new_param, new_state)``; inputs are not mutated."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise DimensionError(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    if lr <= 0:
        raise ValueError("lr must be positive")
    check_finite(grad, "gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = param - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


@dataclass
class Adam:
    """Adam over a dict of named parameters, used by the training loops."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict, lr: float | None = None) -> dict:
        lr = self.lr if lr is None else lr
        out = {}
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                out[name] = p
                continue
            st = self.states.get(name)
            if st is None:
                st = AdamState.zeros_like(p, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
            out[name], self.states[name] = adam_step(p, g, st, lr)
        return out

"""SAE parameter containers and the encode/decode maps.

Shapes follow the column convention: ``W_enc`` is (m, n), ``W_dec`` is (n, m)
and every decoder column is a unit vector. Batches are row-major (B, n).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

VARIANTS = ("standard", "gated")


@dataclass
class SaeParams:
    variant: str
    W_dec: np.ndarray
    b_dec: np.ndarray
    W_enc: Optional[np.ndarray] = None
    b_enc: Optional[np.ndarray] = None
    W_gate: Optional[np.ndarray] = None
    b_gate: Optional[np.ndarray] = None
    W_mag: Optional[np.ndarray] = None
    b_mag: Optional[np.ndarray] = None
    # tied gated mode: W_mag = exp(r_mag)[:, None] * W_gate
    r_mag: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown SAE variant {self.variant!r}")

    @property
    def n(self) -> int:
        return self.W_dec.shape[0]

    @property
    def m(self) -> int:
        return self.W_dec.shape[1]

    @property
    def tied(self) -> bool:
        return self.r_mag is not None

    def magnitude_weights(self) -> np.ndarray:
        if self.tied:
            return np.exp(self.r_mag)[:, None] * self.W_gate
        return self.W_mag

    def tensors(self) -> dict:
        return {
            f.name: getattr(self, f.name)
            for f in dataclasses.fields(self)
            if f.name != "variant" and getattr(self, f.name) is not None
        }

    def replace(self, **tensors) -> "SaeParams":
        return dataclasses.replace(self, **tensors)

    def copy(self) -> "SaeParams":
        return self.replace(**{k: v.copy() for k, v in self.tensors().items()})

    @classmethod
    def from_tensors(cls, variant: str, tensors: dict) -> "SaeParams":
        return cls(variant=variant, **{k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()})


def unit_columns(W: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(W, axis=0, keepdims=True)
    return W / np.where(norms > 0, norms, 1.0)


def init_params(n: int, m: int, variant: str = "standard", seed: int = 0, tied: bool = False) -> SaeParams:
    """Random unit decoder columns, encoder equal to the decoder transpose, zero biases."""
    rng = np.random.default_rng(seed)
    W_dec = unit_columns(rng.standard_normal((n, m)))
    zeros_m = np.zeros(m)
    b_dec = np.zeros(n)
    if variant == "standard":
        return SaeParams("standard", W_dec, b_dec, W_enc=W_dec.T.copy(), b_enc=zeros_m)
    if tied:
        return SaeParams("gated", W_dec, b_dec, W_gate=W_dec.T.copy(), b_gate=zeros_m.copy(),
                         b_mag=zeros_m.copy(), r_mag=zeros_m.copy())
    return SaeParams("gated", W_dec, b_dec, W_gate=W_dec.T.copy(), b_gate=zeros_m.copy(),
                     W_mag=W_dec.T.copy(), b_mag=zeros_m.copy())


def gate_preactivation(params: SaeParams, x: np.ndarray) -> np.ndarray:
    return (x - params.b_dec) @ params.W_gate.T + params.b_gate


def encode(params: SaeParams, x) -> np.ndarray:
    """Feature activations for a vector (n,) or batch (B, n)."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - params.b_dec
    if params.variant == "standard":
        return np.maximum(centered @ params.W_enc.T + params.b_enc, 0.0)
    gate = centered @ params.W_gate.T + params.b_gate
    mag = centered @ params.magnitude_weights().T + params.b_mag
    return np.where(gate > 0, np.maximum(mag, 0.0), 0.0)


def decode(params: SaeParams, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    return f @ params.W_dec.T + params.b_dec

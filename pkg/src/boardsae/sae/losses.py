"""Training losses for Standard and Gated SAEs and their analytic gradients.

Both losses accept an exponent ``p``; ``p = 1`` is the plain L1 penalty and
``p < 1`` the annealed Lp^p penalty. All terms are means over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..numerics import check_finite
from .model import SaeParams

GRAD_EPS = 1e-8


@dataclass
class LossBreakdown:
    total: float
    reconstruction: float
    sparsity: float
    auxiliary: float = 0.0
    l0: float = 0.0


def _lp_terms(f: np.ndarray, p: float, lam: float, batch: int):
    """Penalty value and its derivative w.r.t. ``f`` (0 where f == 0)."""
    pos = f > 0
    dval = np.zeros_like(f)
    if p == 1.0:
        dval[pos] = lam / batch
        return lam * f[pos].sum() / batch, dval
    vals = f[pos]
    dval[pos] = lam * p * (vals + GRAD_EPS) ** (p - 1.0) / batch
    return lam * np.sum(vals**p) / batch, dval


def _forward_standard(params: SaeParams, x, lam, p, squared, want_grads):
    B = x.shape[0]
    centered = x - params.b_dec
    pre = centered @ params.W_enc.T + params.b_enc
    f = np.maximum(pre, 0.0)
    x_hat = f @ params.W_dec.T + params.b_dec
    r = x_hat - x
    if squared:
        rec = float(np.sum(r * r) / B)
    else:
        norms = np.sqrt(np.sum(r * r, axis=1))
        rec = float(norms.sum() / B)
    sp, dsp = _lp_terms(f, p, lam, B)
    out = LossBreakdown(rec + float(sp), rec, float(sp), 0.0, float((f > 0).sum(axis=1).mean()))
    if not want_grads:
        return out, None, f
    if squared:
        g_xhat = 2.0 * r / B
    else:
        g_xhat = np.where(norms[:, None] > 0, r / np.where(norms > 0, norms, 1.0)[:, None], 0.0) / B
    grads = {"W_dec": g_xhat.T @ f, "b_dec": g_xhat.sum(axis=0)}
    g_f = g_xhat @ params.W_dec + dsp
    g_pre = np.where(pre > 0, g_f, 0.0)
    grads["W_enc"] = g_pre.T @ centered
    grads["b_enc"] = g_pre.sum(axis=0)
    grads["b_dec"] = grads["b_dec"] - (g_pre @ params.W_enc).sum(axis=0)
    return out, grads, f


def _forward_gated(params: SaeParams, x, lam, p, frozen, want_grads):
    B = x.shape[0]
    W_dec_frozen, b_dec_frozen = frozen if frozen is not None else (params.W_dec, params.b_dec)
    centered = x - params.b_dec
    W_mag = params.magnitude_weights()
    gate_pre = centered @ params.W_gate.T + params.b_gate
    mag_pre = centered @ W_mag.T + params.b_mag
    gate_open = gate_pre > 0
    mag = np.maximum(mag_pre, 0.0)
    f = np.where(gate_open, mag, 0.0)
    x_hat = f @ params.W_dec.T + params.b_dec
    r = x_hat - x
    rec = float(np.sum(r * r) / B)

    gate_act = np.maximum(gate_pre, 0.0)
    sp, dsp = _lp_terms(gate_act, p, lam, B)
    x_aux = gate_act @ W_dec_frozen.T + b_dec_frozen
    r_aux = x_aux - x
    aux = float(np.sum(r_aux * r_aux) / B)
    out = LossBreakdown(rec + float(sp) + aux, rec, float(sp), aux, float(gate_open.sum(axis=1).mean()))
    if not want_grads:
        return out, None, gate_act

    g_xhat = 2.0 * r / B
    grads = {"W_dec": g_xhat.T @ f, "b_dec": g_xhat.sum(axis=0)}
    # magnitude path; the Heaviside gate is treated as a constant mask
    g_mag_pre = np.where(gate_open & (mag_pre > 0), g_xhat @ params.W_dec, 0.0)
    g_W_mag = g_mag_pre.T @ centered
    grads["b_mag"] = g_mag_pre.sum(axis=0)
    # gate path: sparsity term plus auxiliary term through the frozen decoder
    g_aux = 2.0 * r_aux / B
    g_gate_pre = np.where(gate_open, dsp + g_aux @ W_dec_frozen, 0.0)
    grads["W_gate"] = g_gate_pre.T @ centered
    grads["b_gate"] = g_gate_pre.sum(axis=0)
    grads["b_dec"] = grads["b_dec"] - (g_mag_pre @ W_mag).sum(axis=0) - (g_gate_pre @ params.W_gate).sum(axis=0)
    if params.tied:
        scale = np.exp(params.r_mag)
        grads["W_gate"] = grads["W_gate"] + scale[:, None] * g_W_mag
        grads["r_mag"] = scale * np.sum(g_W_mag * params.W_gate, axis=1)
    else:
        grads["W_mag"] = g_W_mag
    return out, grads, gate_act


def loss_standard(params: SaeParams, x, lam: float, p: float = 1.0, squared: bool = False) -> LossBreakdown:
    """Mean of ``||x - x_hat||_2 + lam * sum_i f_i^p`` over the batch.

    The reconstruction norm is unsquared by default; ``squared=True`` gives
    the conventional squared error.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return _forward_standard(params, x, lam, p, squared, False)[0]


def loss_gated(params: SaeParams, x, lam: float, p: float = 1.0,
               frozen_decoder: Optional[tuple] = None) -> LossBreakdown:
    """Gated loss: squared reconstruction, gate sparsity and the auxiliary term.

    ``frozen_decoder`` is the ``(W_dec, b_dec)`` pair used by the auxiliary
    term; it defaults to the live decoder values.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return _forward_gated(params, x, lam, p, frozen_decoder, False)[0]


def gradients(params: SaeParams, x, lam: float, p: float = 1.0, squared: bool = False):
    """Loss breakdown, gradients keyed like ``params.tensors()``, and the sparsity-penalised activations.

    For p < 1 the penalty derivative uses ``(f + 1e-8)**(p - 1)``. Gradients
    stop at ReLU kinks and at the gate indicator, and the auxiliary gated
    term sends nothing to the decoder.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if params.variant == "standard":
        out, grads, acts = _forward_standard(params, x, lam, p, squared, True)
    else:
        out, grads, acts = _forward_gated(params, x, lam, p, None, True)
    for name, g in grads.items():
        check_finite(g, f"gradient of {name}")
    return out, grads, acts

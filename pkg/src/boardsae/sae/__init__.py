from .model import SaeParams, init_params, encode, decode, gate_preactivation
from .losses import LossBreakdown, loss_standard, loss_gated, gradients
from .anneal import AnnealState, sparsity_penalty, p_schedule, lambda_update
from .train import TrainConfig, TrainResult, train, DivergenceError

__all__ = [
    "SaeParams", "init_params", "encode", "decode", "gate_preactivation",
    "LossBreakdown", "loss_standard", "loss_gated", "gradients",
    "AnnealState", "sparsity_penalty", "p_schedule", "lambda_update",
    "TrainConfig", "TrainResult", "train", "DivergenceError",
]

"""Forward-only pre-LayerNorm GPT: tokenization, residual extraction, patching.

Weight names follow the usual hooked-transformer layout::

    embed.W_E (V, n)        pos_embed.W_pos (ctx, n)
    blocks.{l}.ln1.w/b      blocks.{l}.attn.W_Q/W_K/W_V (n, n), b_Q/b_K/b_V (n)
    blocks.{l}.attn.W_O (n, n), b_O (n)
    blocks.{l}.ln2.w/b      blocks.{l}.mlp.W_in (n, d_mlp), b_in, W_out (d_mlp, n), b_out
    ln_final.w/b            unembed.W_U (n, V), b_U (V)

Layer indices are 0-based; the activation "at layer l" is the residual
stream after block l has added its MLP output.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataset_io
from .errors import ContextError, DimensionError, VocabError
from .othello_engine import COLUMNS as _OTH_COLS, PASS

CHESS_VOCAB = tuple(" #+-.0123456789;=BKNOQRabcdefghx")
OTHELLO_VOCAB = tuple(f"{c}{r}" for r in range(1, 9) for c in _OTH_COLS) + (PASS,)
LN_EPS = 1e-5


def default_vocab(game: str) -> tuple:
    if game == "chess":
        return CHESS_VOCAB
    if game == "othello":
        return OTHELLO_VOCAB
    raise ValueError(f"unknown game {game!r}")


def tokenize(text, game: str, vocab: Optional[Sequence[str]] = None) -> np.ndarray:
    """Chess: one id per character. Othello: one id per square token (``--`` for a pass)."""
    vocab = tuple(vocab) if vocab is not None else default_vocab(game)
    index = {tok: i for i, tok in enumerate(vocab)}
    if game == "chess":
        symbols = list(text)
    else:
        symbols = text.split() if isinstance(text, str) else list(text)
    ids = []
    for pos, sym in enumerate(symbols):
        if sym not in index:
            raise VocabError(f"symbol {sym!r} is not in the vocabulary", pos)
        ids.append(index[sym])
    return np.asarray(ids, dtype=np.int64)


def detokenize(ids, game: str, vocab: Optional[Sequence[str]] = None) -> str:
    vocab = tuple(vocab) if vocab is not None else default_vocab(game)
    toks = [vocab[i] for i in ids]
    return "".join(toks) if game == "chess" else " ".join(toks)


@dataclass
class TransformerModel:
    n_layers: int
    n_heads: int
    d_model: int
    vocab: tuple
    game: str
    weights: dict = field(repr=False)
    source_hash: bytes = field(default=b"\0" * 32, repr=False)

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise DimensionError("d_model must be divisible by n_heads")
        self.vocab = tuple(self.vocab)
        w = self.weights
        V, n = len(self.vocab), self.d_model
        expect = {"embed.W_E": (V, n), "unembed.W_U": (n, V), "unembed.b_U": (V,),
                  "ln_final.w": (n,), "ln_final.b": (n,)}
        for l in range(self.n_layers):
            pre = f"blocks.{l}."
            for k in ("W_Q", "W_K", "W_V", "W_O"):
                expect[pre + "attn." + k] = (n, n)
            for k in ("b_Q", "b_K", "b_V", "b_O"):
                expect[pre + "attn." + k] = (n,)
            for k in ("ln1.w", "ln1.b", "ln2.w", "ln2.b", "mlp.b_out"):
                expect[pre + k] = (n,)
        for name, shape in expect.items():
            if name not in w:
                raise DimensionError(f"missing weight {name}")
            if w[name].shape != shape:
                raise DimensionError(f"{name} has shape {w[name].shape}, expected {shape}")
        if w["pos_embed.W_pos"].shape[1] != n:
            raise DimensionError("positional embedding width mismatch")

    @property
    def context_length(self) -> int:
        return self.weights["pos_embed.W_pos"].shape[0]

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def save(self, path) -> None:
        dataset_io.write_model_file(path, n_layers=self.n_layers, n_heads=self.n_heads,
                                    d_model=self.d_model, vocab=self.vocab, game=self.game,
                                    tensors=self.weights)

    @classmethod
    def load(cls, path) -> "TransformerModel":
        raw = Path(path).read_bytes()
        d = dataset_io.read_model_file(path)
        return cls(d["n_layers"], d["n_heads"], d["d_model"], tuple(d["vocab"]), d["game"],
                   d["tensors"], hashlib.sha256(raw).digest())


def random_model(game: str = "chess", n_layers: int = 2, n_heads: int = 2, d_model: int = 16,
                 context_length: int = 256, d_mlp: Optional[int] = None, seed: int = 0,
                 vocab: Optional[Sequence[str]] = None) -> TransformerModel:
    """Randomly initialised model; the untrained baseline and the test fixture."""
    rng = np.random.default_rng(seed)
    vocab = tuple(vocab) if vocab is not None else default_vocab(game)
    V, n = len(vocab), d_model
    d_mlp = d_mlp or 4 * n
    s = 1.0 / np.sqrt(n)
    w = {
        "embed.W_E": rng.standard_normal((V, n)),
        "pos_embed.W_pos": 0.5 * rng.standard_normal((context_length, n)),
        "ln_final.w": np.ones(n), "ln_final.b": np.zeros(n),
        "unembed.W_U": 2.0 * s * rng.standard_normal((n, V)), "unembed.b_U": np.zeros(V),
    }
    for l in range(n_layers):
        pre = f"blocks.{l}."
        for k in ("W_Q", "W_K", "W_V", "W_O"):
            w[pre + "attn." + k] = s * rng.standard_normal((n, n))
        for k in ("b_Q", "b_K", "b_V", "b_O"):
            w[pre + "attn." + k] = np.zeros(n)
        w[pre + "ln1.w"], w[pre + "ln1.b"] = np.ones(n), np.zeros(n)
        w[pre + "ln2.w"], w[pre + "ln2.b"] = np.ones(n), np.zeros(n)
        w[pre + "mlp.W_in"] = s * rng.standard_normal((n, d_mlp))
        w[pre + "mlp.b_in"] = np.zeros(d_mlp)
        w[pre + "mlp.W_out"] = rng.standard_normal((d_mlp, n)) / np.sqrt(d_mlp)
        w[pre + "mlp.b_out"] = np.zeros(n)
    digest = hashlib.sha256(f"random:{game}:{n_layers}:{n_heads}:{d_model}:{seed}".encode()).digest()
    return TransformerModel(n_layers, n_heads, d_model, vocab, game, w, digest)


def layer_norm(x: np.ndarray, w: np.ndarray, b: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    return xc / np.sqrt(var + eps) * w + b


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def _attention(model: TransformerModel, l: int, x: np.ndarray) -> np.ndarray:
    w = model.weights
    pre = f"blocks.{l}.attn."
    T, H, dh = x.shape[0], model.n_heads, model.d_head
    q = (x @ w[pre + "W_Q"] + w[pre + "b_Q"]).reshape(T, H, dh).transpose(1, 0, 2)
    k = (x @ w[pre + "W_K"] + w[pre + "b_K"]).reshape(T, H, dh).transpose(1, 0, 2)
    v = (x @ w[pre + "W_V"] + w[pre + "b_V"]).reshape(T, H, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    scores = np.where(np.tril(np.ones((T, T), dtype=bool)), scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    z = (attn @ v).transpose(1, 0, 2).reshape(T, H * dh)
    return z @ w[pre + "W_O"] + w[pre + "b_O"]


def _mlp(model: TransformerModel, l: int, x: np.ndarray) -> np.ndarray:
    w = model.weights
    pre = f"blocks.{l}.mlp."
    return gelu(x @ w[pre + "W_in"] + w[pre + "b_in"]) @ w[pre + "W_out"] + w[pre + "b_out"]


@dataclass
class ForwardResult:
    logits: np.ndarray      # (T, V)
    losses: np.ndarray      # (T - 1,) next-token cross-entropy from positions 0..T-2
    captured: Optional[np.ndarray] = None

    @property
    def mean_loss(self) -> float:
        return float(self.losses.mean()) if self.losses.size else float("nan")


def run(model: TransformerModel, tokens, capture_layer: Optional[int] = None,
        patch: Optional[tuple] = None) -> ForwardResult:
    """Full forward pass. ``patch = (layer, positions, rows)`` overwrites the residual stream there."""
    tokens = np.asarray(tokens, dtype=np.int64)
    T = tokens.shape[0]
    if T > model.context_length:
        raise ContextError(f"{T} tokens exceed the context length {model.context_length}")
    if T == 0:
        raise ContextError("empty token sequence")
    w = model.weights
    resid = w["embed.W_E"][tokens] + w["pos_embed.W_pos"][:T]
    captured = None
    for l in range(model.n_layers):
        pre = f"blocks.{l}."
        resid = resid + _attention(model, l, layer_norm(resid, w[pre + "ln1.w"], w[pre + "ln1.b"]))
        resid = resid + _mlp(model, l, layer_norm(resid, w[pre + "ln2.w"], w[pre + "ln2.b"]))
        if patch is not None and patch[0] == l:
            _, positions, rows = patch
            resid = resid.copy()
            resid[np.asarray(positions, dtype=np.int64)] = rows
        if capture_layer == l:
            captured = resid.copy()
    logits = layer_norm(resid, w["ln_final.w"], w["ln_final.b"]) @ w["unembed.W_U"] + w["unembed.b_U"]
    shifted = logits[:-1] - logits[:-1].max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1))
    losses = logz - shifted[np.arange(T - 1), tokens[1:]]
    return ForwardResult(logits, losses, captured)


def forward(model: TransformerModel, tokens) -> ForwardResult:
    return run(model, tokens)


@dataclass
class ActivationBatch:
    acts: np.ndarray        # (samples, n)
    provenance: np.ndarray  # (samples, 2): game id, token position
    layer: int


def _check_positions(positions, T: int) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.int64).reshape(-1)
    if pos.size and (pos.min() < 0 or pos.max() >= T):
        raise IndexError(f"token positions must lie in [0, {T})")
    return pos


def extract_activations(model: TransformerModel, tokens, layer: int, positions, game_id: int = 0) -> ActivationBatch:
    if not 0 <= layer < model.n_layers:
        raise IndexError(f"layer {layer} outside [0, {model.n_layers})")
    tokens = np.asarray(tokens, dtype=np.int64)
    pos = _check_positions(positions, tokens.shape[0])
    if pos.size == 0:
        return ActivationBatch(np.zeros((0, model.d_model)), np.zeros((0, 2), dtype=np.int64), layer)
    res = run(model, tokens, capture_layer=layer)
    prov = np.stack([np.full(pos.size, game_id), pos], axis=1)
    return ActivationBatch(res.captured[pos], prov, layer)


def _loss_at(losses: np.ndarray, positions: np.ndarray, mode: str) -> np.ndarray:
    if mode == "all":
        return losses
    if mode != "patched":
        raise ValueError("loss mode must be 'patched' or 'all'")
    return losses[positions[positions < losses.shape[0]]]


def patched_losses(model: TransformerModel, tokens, layer: int, positions, replacements,
                   mode: str = "patched") -> np.ndarray:
    """Per-position next-token losses after overwriting the residual stream at ``positions``.

    ``mode="patched"`` keeps only predictions made from the patched positions
    (positions without a next token drop out); ``mode="all"`` keeps every position.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    pos = _check_positions(positions, tokens.shape[0])
    rows = np.asarray(replacements, dtype=np.float64)
    if rows.shape != (pos.size, model.d_model):
        raise DimensionError(f"replacements have shape {rows.shape}, expected {(pos.size, model.d_model)}")
    res = run(model, tokens, patch=(layer, pos, rows))
    return _loss_at(res.losses, pos, mode)


def patched_forward(model, tokens, layer, positions, replacements, mode: str = "patched") -> float:
    """Mean cross-entropy H_* after substitution (see ``patched_losses``)."""
    return float(np.mean(patched_losses(model, tokens, layer, positions, replacements, mode)))


@dataclass
class LossTriple:
    h_orig: float
    h_patched: float
    h_zero: float


def loss_triple(model: TransformerModel, games: Sequence, layer: int, reconstruct,
                mode: str = "patched") -> LossTriple:
    """Pooled H_orig, H_* and H_0 over ``(tokens, positions)`` games.

    ``reconstruct`` maps an (k, n) activation block to its reconstruction.
    """
    orig, star, zero = [], [], []
    for tokens, positions in games:
        tokens = np.asarray(tokens, dtype=np.int64)
        pos = _check_positions(positions, tokens.shape[0])
        if pos.size == 0:
            continue
        res = run(model, tokens, capture_layer=layer)
        acts = res.captured[pos]
        orig.append(_loss_at(res.losses, pos, mode))
        star.append(patched_losses(model, tokens, layer, pos, reconstruct(acts), mode))
        zero.append(patched_losses(model, tokens, layer, pos, np.zeros_like(acts), mode))
    if not orig:
        raise ValueError("no positions to evaluate")
    cat = lambda xs: float(np.concatenate(xs).mean())
    return LossTriple(cat(orig), cat(star), cat(zero))

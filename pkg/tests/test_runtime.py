import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boardsae import runtime as rt
from boardsae.errors import ContextError, DimensionError, VocabError


MODEL = rt.random_model("chess", n_layers=2, n_heads=2, d_model=16, context_length=64, seed=0)


@pytest.fixture
def model():
    return MODEL


TEXT = ";1.e4 e5 2.Nf3 Nc6 3.Bb5 a6"


def test_chess_tokenize_char_level():
    assert rt.tokenize("1.e4", "chess").size == 4
    ids = rt.tokenize(TEXT, "chess")
    assert rt.detokenize(ids, "chess") == TEXT


def test_othello_tokenize():
    assert rt.tokenize("d3 c5", "othello").size == 2
    ids = rt.tokenize("d3 -- c5", "othello")
    assert rt.detokenize(ids, "othello") == "d3 -- c5"
    assert len(rt.OTHELLO_VOCAB) == 65


def test_vocab_error_position():
    with pytest.raises(VocabError) as err:
        rt.tokenize("1.e4 e5 2.Nf3!", "chess")
    assert err.value.position == 13


def test_uniform_logits_give_log_vocab(model):
    w = dict(model.weights)
    w["unembed.W_U"] = np.zeros_like(w["unembed.W_U"])
    flat = rt.TransformerModel(2, 2, 16, model.vocab, "chess", w)
    res = rt.forward(flat, rt.tokenize(TEXT, "chess"))
    assert np.allclose(res.losses, np.log(len(model.vocab)), atol=1e-12)


def test_forward_deterministic_and_positive(model):
    toks = rt.tokenize(TEXT, "chess")
    a, b = rt.forward(model, toks), rt.forward(model, toks)
    assert a.logits.tobytes() == b.logits.tobytes()
    assert np.isfinite(a.mean_loss) and a.mean_loss > 0


def test_context_overflow(model):
    with pytest.raises(ContextError):
        rt.forward(model, np.zeros(65, dtype=int))


def test_shape_validation(model):
    w = dict(model.weights)
    w["blocks.0.attn.W_Q"] = np.zeros((16, 8))
    with pytest.raises(DimensionError):
        rt.TransformerModel(2, 2, 16, model.vocab, "chess", w)
    with pytest.raises(DimensionError):
        rt.TransformerModel(2, 3, 16, model.vocab, "chess", model.weights)


@settings(max_examples=20)
@given(st.integers(1, len(TEXT) - 1), st.integers(0, 31))
def test_causality(cut, new_token):
    model = MODEL
    toks = rt.tokenize(TEXT, "chess")
    other = toks.copy()
    other[cut] = new_token
    a, b = rt.forward(model, toks), rt.forward(model, other)
    assert np.array_equal(a.logits[:cut], b.logits[:cut])


def test_extract_and_identity_patch(model):
    toks = rt.tokenize(TEXT, "chess")
    pos = [i for i, c in enumerate(TEXT) if c == "."]
    batch = rt.extract_activations(model, toks, 1, pos)
    assert batch.acts.shape == (len(pos), 16)
    assert (batch.provenance[:, 1] == pos).all()
    h_orig = float(np.mean(rt.forward(model, toks).losses[pos]))
    h_star = rt.patched_forward(model, toks, 1, pos, batch.acts)
    assert abs(h_star - h_orig) < 1e-9


def test_zero_patch_equals_ablation(model):
    toks = rt.tokenize(TEXT, "chess")
    pos = [2, 9]
    zero = rt.patched_forward(model, toks, 0, pos, np.zeros((2, 16)))
    lt = rt.loss_triple(model, [(toks, pos)], 0, lambda a: np.zeros_like(a))
    assert lt.h_patched == lt.h_zero == zero


def test_patch_leaves_earlier_losses(model):
    toks = rt.tokenize(TEXT, "chess")
    base = rt.forward(model, toks).losses
    patched = rt.patched_losses(model, toks, 1, [10], np.full((1, 16), 3.0), mode="all")
    assert np.array_equal(base[:10], patched[:10])
    assert not np.array_equal(base[10:], patched[10:])


def test_extract_empty_and_invalid(model):
    toks = rt.tokenize(TEXT, "chess")
    assert rt.extract_activations(model, toks, 0, []).acts.shape == (0, 16)
    with pytest.raises(IndexError):
        rt.extract_activations(model, toks, 0, [len(toks)])
    with pytest.raises(IndexError):
        rt.extract_activations(model, toks, 2, [0])
    with pytest.raises(DimensionError):
        rt.patched_forward(model, toks, 0, [1, 2], np.zeros((3, 16)))


def test_extraction_site_is_post_mlp(model):
    # manual recomputation of block 0 output
    toks = rt.tokenize(TEXT, "chess")
    w = model.weights
    x = w["embed.W_E"][toks] + w["pos_embed.W_pos"][:len(toks)]
    x = x + rt._attention(model, 0, rt.layer_norm(x, w["blocks.0.ln1.w"], w["blocks.0.ln1.b"]))
    x = x + rt._mlp(model, 0, rt.layer_norm(x, w["blocks.0.ln2.w"], w["blocks.0.ln2.b"]))
    got = rt.extract_activations(model, toks, 0, range(len(toks))).acts
    assert np.allclose(got, x, atol=1e-12)


def test_layer_norm_unit_variance(rng):
    x = rng.standard_normal((50, 16)) * 7 + 3
    y = rt.layer_norm(x, np.ones(16), np.zeros(16), eps=0.0)
    assert np.allclose(y.var(axis=1), 1.0, atol=1e-6)
    assert np.allclose(y.mean(axis=1), 0.0, atol=1e-9)


def test_save_load_roundtrip(tmp_path, model):
    path = tmp_path / "m.bin"
    model.save(path)
    back = rt.TransformerModel.load(path)
    toks = rt.tokenize(TEXT, "chess")
    assert back.vocab == model.vocab and back.game == "chess"
    # float32 on disk
    assert abs(rt.forward(back, toks).mean_loss - rt.forward(model, toks).mean_loss) < 1e-4

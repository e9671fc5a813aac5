import numpy as np
from hypothesis import given, settings, strategies as st

from boardsae.sae import init_params, loss_standard
from boardsae.synth import make_dictionary, match_features, sample_activations


def test_unit_vectors_and_overcomplete():
    d = make_dictionary(16, 64, 3)
    assert d.vectors.shape == (64, 16)
    assert np.allclose(np.linalg.norm(d.vectors, axis=1), 1.0)


def test_k_zero_gives_zeros():
    s = sample_activations(make_dictionary(8, 10, 0), 20)
    assert not s.x.any() and not s.active.any()


def test_k_one_scaled_columns():
    d = make_dictionary(8, 10, 1)
    s = sample_activations(d, 200, seed=3)
    j = s.active.argmax(axis=1)
    scale = s.coefficients[np.arange(200), j]
    assert np.allclose(s.x, scale[:, None] * d.vectors[j])
    assert ((scale >= 0.5) & (scale <= 1.5)).all()


@settings(max_examples=20)
@given(st.integers(0, 8), st.integers(0, 1000))
def test_exact_label_l0(k, seed):
    s = sample_activations(make_dictionary(6, 8, k, seed=seed), 100, seed=seed)
    assert (s.active.sum(axis=1) == k).all()


def test_deterministic_per_seed():
    d = make_dictionary(seed=4)
    a, b = sample_activations(d, 50, seed=9), sample_activations(d, 50, seed=9)
    assert np.array_equal(a.x, b.x)
    assert not np.array_equal(a.x, sample_activations(d, 50, seed=10).x)


def test_match_identity():
    d = make_dictionary()
    mean, rate, _ = match_features(d.vectors.T, d.vectors)
    assert mean == 1.0 or abs(mean - 1.0) < 1e-12
    assert rate == 1.0


def test_match_random_low():
    for seed in range(5):
        r = np.random.default_rng(seed)
        learned = r.standard_normal((64, 64))
        mean, _, _ = match_features(learned, make_dictionary(64, 64, seed=seed).vectors)
        assert mean < 0.5


def test_match_one_replaced():
    d = make_dictionary(16, 64)
    cols = d.vectors.T.copy()
    cols[:, 5] = np.random.default_rng(0).standard_normal(16)
    _, rate, best = match_features(cols, d.vectors)
    assert rate == 63 / 64 and best[5] < 0.9


def test_planted_sae_loss_is_sparsity_only():
    # m_true ≤ d, so the pseudo-inverse encoder returns the true coefficients
    d = make_dictionary(16, 12, 3)
    s = sample_activations(d, 500, seed=1)
    D = d.vectors.T
    planted = init_params(16, 12).replace(W_dec=D.copy(), W_enc=np.linalg.pinv(D),
                                         b_enc=np.zeros(12), b_dec=np.zeros(16))
    lam = 0.3
    out = loss_standard(planted, s.x, lam=lam)
    assert out.reconstruction < 1e-10
    assert abs(out.sparsity - lam * s.coefficients.sum() / len(s.x)) < 1e-9
    assert abs(out.total - out.sparsity) < 1e-9

"""Classifier numerics: gradients, determinism, dropout scaling, training."""

from __future__ import annotations

import numpy as np
import pytest

from cartal.classifier import (
    Classifier,
    ClassifierConfig,
    TrainConfig,
    fit,
    init_weights,
    load_checkpoint,
    loss_and_gradients,
    save_checkpoint,
)
from cartal.errors import DivergenceError


def _blobs(n_per_class, d=2, sep=4.0, seed=0, C=2):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for c in range(C):
        center = np.zeros(d)
        center[c % d] = sep * (1 + c // d)
        X.append(rng.standard_normal((n_per_class, d)) + center)
        y.append(np.full(n_per_class, c))
    return np.vstack(X), np.concatenate(y)


# --- gradient check -----------------------------------------------------------

def _relative_error(a, b):
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


def finite_difference_check(config, weights, X, y, masks, rng, probes_per_tensor=3, h=1e-6):
    """Central finite differences on randomly probed weight entries.

    Biases get a small jitter first so no relu pre-activation sits exactly on
    the kink; entries below the difference resolution are skipped.
    """
    for _, b in weights:
        b += rng.uniform(-0.1, 0.1, size=b.shape)
    _, grads = loss_and_gradients(config, weights, X, y, masks)
    worst = 0.0
    for layer, (W, b) in enumerate(weights):
        for tensor, grad in ((W, grads[layer][0]), (b, grads[layer][1])):
            flat = tensor.ravel()
            gflat = np.asarray(grad).ravel()
            for idx in rng.choice(flat.size, size=min(probes_per_tensor, flat.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                up = loss_and_gradients(config, weights, X, y, masks)[0]
                flat[idx] = orig - h
                down = loss_and_gradients(config, weights, X, y, masks)[0]
                flat[idx] = orig
                fd = (up - down) / (2 * h)
                if max(abs(fd), abs(gflat[idx])) < 1e-7:
                    continue
                worst = max(worst, _relative_error(fd, gflat[idx]))
    return worst


@pytest.mark.parametrize("net_seed", range(6))
def test_gradients_match_finite_differences(net_seed):
    rng = np.random.default_rng(net_seed)
    d = int(rng.integers(2, 6))
    width = int(rng.integers(2, 9))
    depth = int(rng.integers(1, 3))
    C = int(rng.integers(2, 5))
    activation = "relu" if rng.random() < 0.5 else "tanh"
    config = ClassifierConfig(d, (width,) * depth, C, dropout_rate=0.0, activation=activation)
    weights = init_weights(config, rng)
    X = rng.standard_normal((12, d))
    y = rng.integers(0, C, size=12)
    worst = finite_difference_check(config, weights, X, y, None, rng)
    assert worst < 1e-4


def test_gradients_with_fixed_dropout_masks():
    rng = np.random.default_rng(99)
    config = ClassifierConfig(3, (6, 5), 3, dropout_rate=0.4)
    weights = init_weights(config, rng)
    X = rng.standard_normal((8, 3))
    y = rng.integers(0, 3, size=8)
    masks = [(rng.random((8, 6)) >= 0.4) / 0.6, (rng.random((8, 5)) >= 0.4) / 0.6]
    worst = finite_difference_check(config, weights, X, y, masks, rng)
    assert worst < 1e-4


# --- fit ------------------------------------------------------------------------

def test_fit_separates_linearly_separable_blobs():
    X, y = _blobs(100, sep=5.0, seed=1)
    config = ClassifierConfig(2, (16,), 2, dropout_rate=0.0)
    model = fit(config, (X, y), val=(X, y), tcfg=TrainConfig(rng_seed=3, max_epochs=20))
    assert model.accuracy(X, y) >= 0.99
    # independent logistic-regression oracle on the same data
    sklearn = pytest.importorskip("sklearn.linear_model")
    oracle = sklearn.LogisticRegression(max_iter=1000).fit(X, y)
    assert oracle.score(X, y) >= 0.99


def test_fit_is_bitwise_deterministic():
    X, y = _blobs(40, seed=5)
    config = ClassifierConfig(2, (8, 8), 2, dropout_rate=0.3)
    tcfg = TrainConfig(rng_seed=11, max_epochs=5)
    m1 = fit(config, (X, y), val=(X, y), tcfg=tcfg)
    m2 = fit(config, (X, y), val=(X, y), tcfg=tcfg)
    for (W1, b1), (W2, b2) in zip(m1.weights, m2.weights):
        assert (W1 == W2).all() and (b1 == b2).all()


def test_fit_constant_label_predicts_it_everywhere():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 3))
    y = np.full(60, 2)
    config = ClassifierConfig(3, (8,), 4, dropout_rate=0.0)
    model = fit(config, (X, y), tcfg=TrainConfig(rng_seed=1, max_epochs=10))
    assert model.accuracy(X, y) == 1.0


def test_fit_rejects_empty_train_set():
    config = ClassifierConfig(2, (4,), 2)
    with pytest.raises(ValueError):
        fit(config, (np.zeros((0, 2)), np.zeros(0, dtype=int)))


def test_fit_raises_divergence_error_with_step():
    X, y = _blobs(50, sep=2.0, seed=2)
    config = ClassifierConfig(2, (8,), 2, dropout_rate=0.0)
    with np.errstate(all="ignore"), pytest.raises(DivergenceError, match="step"):
        fit(config, (X * 1e150, y), tcfg=TrainConfig(learning_rate=1e10, max_epochs=3))


def test_loss_non_increasing_over_first_epochs_with_small_lr():
    X, y = _blobs(80, sep=3.0, seed=7)
    config = ClassifierConfig(2, (8,), 2, dropout_rate=0.0)
    losses = []
    for epochs in (1, 2, 3):
        m = fit(config, (X, y), tcfg=TrainConfig(learning_rate=0.01, max_epochs=epochs, rng_seed=4))
        losses.append(loss_and_gradients(config, m.weights, X, y)[0])
    init = loss_and_gradients(config, init_weights(config, np.random.default_rng(4)), X, y)[0]
    seq = [init] + losses
    assert all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))


def test_early_stopping_respects_patience():
    X, y = _blobs(50, sep=6.0, seed=3)
    config = ClassifierConfig(2, (8,), 2, dropout_rate=0.0)
    model = fit(config, (X, y), val=(X, y), tcfg=TrainConfig(max_epochs=200, patience=3, rng_seed=0))
    assert model.history["epochs"] < 200


# --- inference -------------------------------------------------------------------

def test_predict_proba_rows_sum_to_one():
    rng = np.random.default_rng(1)
    config = ClassifierConfig(4, (8, 8), 5, dropout_rate=0.0)
    model = Classifier(config, init_weights(config, rng))
    P = model.predict_proba(rng.standard_normal((30, 4)))
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert (P >= 0).all() and (P <= 1).all()


def test_zero_weight_network_is_uniform():
    config = ClassifierConfig(2, (4,), 3, dropout_rate=0.0)
    weights = [(np.zeros((2, 4)), np.zeros(4)), (np.zeros((4, 3)), np.zeros(3))]
    model = Classifier(config, weights)
    P = model.predict_proba(np.ones((5, 2)))
    assert np.allclose(P, 1 / 3)


def test_predict_proba_is_pure():
    rng = np.random.default_rng(2)
    config = ClassifierConfig(3, (6,), 2, dropout_rate=0.5)
    model = Classifier(config, init_weights(config, rng))
    X = rng.standard_normal((7, 3))
    assert (model.predict_proba(X) == model.predict_proba(X)).all()


def test_predict_proba_rejects_dim_mismatch():
    config = ClassifierConfig(3, (4,), 2)
    model = Classifier(config, init_weights(config, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        model.predict_proba(np.zeros((2, 5)))


# --- Monte-Carlo inference ----------------------------------------------------------

def test_mc_without_dropout_equals_deterministic():
    rng = np.random.default_rng(4)
    config = ClassifierConfig(3, (6,), 3, dropout_rate=0.0)
    model = Classifier(config, init_weights(config, rng))
    X = rng.standard_normal((9, 3))
    det = model.predict_proba(X)
    for m in model.mc_predict_proba(X, T=4, rng_seed=0):
        assert (m == det).all()


def test_mc_fixed_seed_reproducible_and_varying_on_trained_net():
    X, y = _blobs(60, sep=3.0, seed=6, C=3)
    config = ClassifierConfig(2, (16,), 3, dropout_rate=0.3)
    model = fit(config, (X, y), tcfg=TrainConfig(max_epochs=10, rng_seed=1))
    a = model.mc_predict_proba(X, T=4, rng_seed=123)
    b = model.mc_predict_proba(X, T=4, rng_seed=123)
    for ma, mb in zip(a, b):
        assert (ma == mb).all()
    spread = np.stack(a).std(axis=0)
    assert spread.max() > 0.0


def test_mc_rejects_zero_samples():
    config = ClassifierConfig(2, (4,), 2)
    model = Classifier(config, init_weights(config, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        model.mc_predict_proba(np.zeros((1, 2)), T=0, rng_seed=0)


def test_mc_logit_mean_matches_deterministic_within_two_percent():
    # single hidden layer: inverted dropout makes E[logits] exact
    rng = np.random.default_rng(8)
    config = ClassifierConfig(4, (32,), 3, dropout_rate=0.3)
    model = Classifier(config, init_weights(config, rng))
    x = rng.standard_normal((1, 4))
    h = model.embed(x)
    W, b = model.weights[-1]
    det_logits = (h @ W + b)[0]
    n_samples = 20_000
    mask_rng = np.random.default_rng(77)
    acc = np.zeros_like(det_logits)
    for _ in range(n_samples):
        mask = (mask_rng.random(h.shape) >= 0.3) / 0.7
        acc += ((h * mask) @ W + b)[0]
    mc_logits = acc / n_samples
    scale = max(1.0, np.abs(det_logits).max())
    assert np.abs(mc_logits - det_logits).max() <= 0.02 * scale


# --- embeddings and checkpoints ---------------------------------------------------

def test_embed_shape_purity_and_relu_range():
    rng = np.random.default_rng(9)
    config = ClassifierConfig(5, (7, 6), 3, dropout_rate=0.4, activation="relu")
    model = Classifier(config, init_weights(config, rng))
    X = rng.standard_normal((11, 5))
    E = model.embed(X)
    assert E.shape == (11, 6)
    assert (E >= 0).all()
    assert (E == model.embed(X)).all()


def test_checkpoint_roundtrip_is_exact(tmp_path):
    X, y = _blobs(30, seed=12)
    config = ClassifierConfig(2, (5,), 2, dropout_rate=0.2)
    model = fit(config, (X, y), tcfg=TrainConfig(max_epochs=3, rng_seed=2))
    path = tmp_path / "model.json"
    save_checkpoint(model, path)
    with open(path) as fh:
        assert fh.read(20).find("CARTAL1") > 0
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    for (W1, b1), (W2, b2) in zip(model.weights, loaded.weights):
        assert (W1 == W2).all() and (b1 == b2).all()
    assert (loaded.predict_proba(X) == model.predict_proba(X)).all()


def test_checkpoint_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"magic": "NOPE", "layers": []}')
    with pytest.raises(ValueError, match="CARTAL1"):
        load_checkpoint(path)


def test_dynamics_sink_snapshot_count():
    X, y = _blobs(32, seed=13)  # 64 examples, batch 32 -> 2 steps/epoch
    config = ClassifierConfig(2, (4,), 2, dropout_rate=0.0)
    seen = []
    fit(config, (X, y), tcfg=TrainConfig(max_epochs=3, eval_interval=0.5, rng_seed=0, batch_size=32),
        dynamics_sink=lambda step, gold, pred: seen.append((step, gold.copy(), pred.copy())),
        probe=(X, y))
    assert len(seen) == 6
    assert all(g.shape == (64,) for _, g, _ in seen)
    steps = [s for s, _, _ in seen]
    assert steps == sorted(steps)


def test_dynamics_sink_requires_probe():
    X, y = _blobs(10, seed=0)
    config = ClassifierConfig(2, (4,), 2)
    with pytest.raises(ValueError):
        fit(config, (X, y), dynamics_sink=lambda *a: None)

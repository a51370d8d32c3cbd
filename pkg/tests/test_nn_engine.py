import numpy as np
import pytest

from helpers import fd_layer_gradients, layer_gradient_cases, max_relative_error
from vibediag.nn_engine import (
    Adam,
    Conv3x3,
    Dense,
    Dropout,
    Flatten,
    History,
    MaxPool2x2,
    Model,
    ReLU,
    TrainConfig,
    adam_step,
    load_model,
    save_model,
    softmax_crossentropy,
    train,
)

GRAD_TOL = 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_every_layer_matches_finite_differences(seed):
    for layer, x, training in layer_gradient_cases(seed):
        for analytic, numeric in fd_layer_gradients(layer, x, seed=seed + 100, training=training):
            err = max_relative_error(analytic, numeric)
            assert err <= GRAD_TOL, f"{layer.spec()['type']}: rel err {err:.2e}"


def test_conv_output_shape_matches_architecture_row():
    rng = np.random.default_rng(0)
    conv = Conv3x3(3, 16, rng)
    out = conv.forward(rng.normal(size=(2, 32, 32, 3)))
    assert out.shape == (2, 32, 32, 16)


def test_conv_identity_kernel():
    rng = np.random.default_rng(0)
    conv = Conv3x3(1, 1, rng)
    conv.kernels[...] = 0.0
    conv.kernels[1, 1, 0, 0] = 1.0
    conv.bias[...] = 0.0
    x = rng.normal(size=(1, 6, 6, 1))
    np.testing.assert_allclose(conv.forward(x), x, atol=1e-15)


def test_maxpool_forward_and_tie_routing():
    pool = MaxPool2x2()
    block = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
    out = pool.forward(block)
    assert out[0, 0, 0, 0] == 4.0
    back = pool.backward(np.full((1, 1, 1, 1), 5.0))
    np.testing.assert_array_equal(back[0, :, :, 0], [[0.0, 0.0], [0.0, 5.0]])

    ties = np.full((1, 2, 2, 1), 7.0)
    out = pool.forward(ties)
    assert out[0, 0, 0, 0] == 7.0
    back = pool.backward(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(back[0, :, :, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_maxpool_halves_architecture_shape():
    rng = np.random.default_rng(1)
    out = MaxPool2x2().forward(rng.normal(size=(1, 32, 32, 16)))
    assert out.shape == (1, 16, 16, 16)
    with pytest.raises(ValueError):
        MaxPool2x2().forward(rng.normal(size=(1, 5, 6, 1)))


def test_dense_identity_and_shapes():
    rng = np.random.default_rng(2)
    dense = Dense(4, 4, rng)
    dense.weights[...] = np.eye(4)
    dense.bias[...] = 0.0
    x = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(dense.forward(x), x)

    wide = Dense(1024, 16, rng)
    flat = Flatten().forward(rng.normal(size=(2, 4, 4, 64)))
    assert flat.shape == (2, 1024)
    assert wide.forward(flat).shape == (2, 16)
    with pytest.raises(ValueError):
        dense.forward(rng.normal(size=(3, 5)))


def test_dropout_modes():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 10))
    layer = Dropout(0.5)
    np.testing.assert_array_equal(layer.forward(x, training=False), x)
    zero_rate = Dropout(0.0)
    np.testing.assert_array_equal(zero_rate.forward(x, training=True, rng=rng), x)
    with pytest.raises(ValueError):
        Dropout(1.0)


def test_dropout_preserves_mean():
    rng = np.random.default_rng(4)
    x = np.ones((100, 1000))
    out = Dropout(0.5).forward(x, training=True, rng=rng)
    assert abs(out.mean() - 1.0) < 0.02


def test_softmax_crossentropy_uniform_and_saturated():
    logits = np.zeros((2, 5))
    onehot = np.zeros((2, 5))
    onehot[0, 1] = onehot[1, 3] = 1.0
    loss, probs, grad = softmax_crossentropy(logits, onehot)
    np.testing.assert_allclose(probs, 0.2)
    assert abs(loss - np.log(5.0)) < 1e-12
    assert abs(probs.sum(axis=1) - 1.0).max() < 1e-12

    hot = np.zeros((1, 5))
    hot[0, 2] = 50.0
    target = np.zeros((1, 5))
    target[0, 2] = 1.0
    loss, _, _ = softmax_crossentropy(hot, target)
    assert loss < 1e-12


def test_softmax_crossentropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    logits = rng.normal(size=(4, 5))
    onehot = np.eye(5)[rng.integers(0, 5, size=4)]
    _, _, grad = softmax_crossentropy(logits, onehot)
    h = 1e-5
    numeric = np.zeros_like(logits)
    for i in range(logits.size):
        probe = logits.copy().reshape(-1)
        probe[i] += h
        up, _, _ = softmax_crossentropy(probe.reshape(logits.shape), onehot)
        probe[i] -= 2 * h
        down, _, _ = softmax_crossentropy(probe.reshape(logits.shape), onehot)
        numeric.reshape(-1)[i] = (up - down) / (2 * h)
    assert np.max(np.abs(grad - numeric)) <= 1e-6


def test_softmax_crossentropy_rejects_non_onehot():
    with pytest.raises(ValueError, match="one-hot"):
        softmax_crossentropy(np.zeros((1, 5)), np.full((1, 5), 0.2))


def test_adam_first_step_closed_form():
    param = np.zeros(1)
    grad = np.ones(1)
    m = np.zeros(1)
    v = np.zeros(1)
    out, m, v = adam_step(param, grad, m, v, t=1, learning_rate=1e-4, epsilon=1e-7)
    expected = -1e-4 * 1.0 / (1.0 + 1e-7)
    assert abs(out[0] - expected) < 1e-18


def test_adam_zero_gradient_is_noop():
    param = np.array([1.5, -2.0])
    out, _, _ = adam_step(param, np.zeros(2), np.zeros(2), np.zeros(2), t=1, learning_rate=0.1)
    np.testing.assert_array_equal(out, param)


def test_adam_two_steps_match_hand_recurrence():
    lr, b1, b2, eps = 1e-4, 0.9, 0.999, 1e-7
    theta = np.zeros(1)
    m = np.zeros(1)
    v = np.zeros(1)
    # Hand recurrence with constant unit gradient.
    m1 = (1 - b1) * 1.0
    v1 = (1 - b2) * 1.0
    t1 = -lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    m2 = b1 * m1 + (1 - b1)
    v2 = b2 * v1 + (1 - b2)
    t2 = t1 - lr * (m2 / (1 - b1**2)) / (np.sqrt(v2 / (1 - b2**2)) + eps)

    theta, m, v = adam_step(theta, np.ones(1), m, v, t=1, learning_rate=lr, epsilon=eps)
    assert abs(theta[0] - t1) < 1e-12
    theta, m, v = adam_step(theta, np.ones(1), m, v, t=2, learning_rate=lr, epsilon=eps)
    assert abs(theta[0] - t2) < 1e-12


def test_adam_class_matches_functional_step():
    rng = np.random.default_rng(11)
    p_obj = [rng.normal(size=(3, 2))]
    p_fn = [p.copy() for p in p_obj]
    g = [rng.normal(size=(3, 2))]
    cfg = TrainConfig(learning_rate=0.01)
    opt = Adam(p_obj, cfg)
    m = np.zeros((3, 2))
    v = np.zeros((3, 2))
    for t in range(1, 4):
        opt.step(p_obj, g)
        p_fn[0], m, v = adam_step(p_fn[0], g[0], m, v, t=t, learning_rate=0.01,
                                  beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)
    np.testing.assert_allclose(p_obj[0], p_fn[0], atol=1e-14)


def make_toy_split(n=120, seed=0, noise=0.1):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    feats = np.where(labels[:, None] == 1, 1.0, -1.0) + rng.normal(0, noise, size=(n, 2))
    onehot = np.eye(2)[labels]
    return feats, onehot


def tiny_mlp(seed=0):
    rng = np.random.default_rng(seed)
    return Model(
        image_layers=None,
        feature_layers=[Dense(2, 8, rng), ReLU()],
        head_layers=[Dense(8, 2, rng)],
    )


def test_train_solves_separable_toy_problem():
    feats, onehot = make_toy_split()
    vfeats, vonehot = make_toy_split(n=40, seed=1)
    cfg = TrainConfig(learning_rate=0.05, batch_size=20, max_epochs=200, patience=200, seed=0)
    _, history = train(tiny_mlp(), (None, feats, onehot), (None, vfeats, vonehot), cfg)
    assert max(history.train_accuracy) >= 0.99
    assert len(history) <= 200


def test_loss_decreases_over_first_ten_full_batch_steps():
    feats, onehot = make_toy_split()
    cfg = TrainConfig(learning_rate=0.05, batch_size=feats.shape[0], max_epochs=10,
                      patience=10, seed=0)
    _, history = train(tiny_mlp(), (None, feats, onehot), (None, feats, onehot), cfg)
    assert history.train_loss[9] < history.train_loss[0]


def test_training_history_is_bitwise_deterministic():
    feats, onehot = make_toy_split()
    vfeats, vonehot = make_toy_split(n=40, seed=1)
    cfg = TrainConfig(learning_rate=0.05, batch_size=16, max_epochs=12, patience=12, seed=5)
    _, h1 = train(tiny_mlp(seed=3), (None, feats, onehot), (None, vfeats, vonehot), cfg)
    _, h2 = train(tiny_mlp(seed=3), (None, feats, onehot), (None, vfeats, vonehot), cfg)
    assert h1.train_loss == h2.train_loss
    assert h1.val_loss == h2.val_loss
    assert h1.best_epoch == h2.best_epoch


def test_train_restores_best_parameters():
    # Random labels make validation loss wander, forcing an early stop.
    rng = np.random.default_rng(9)
    feats = rng.normal(size=(60, 2))
    onehot = np.eye(2)[rng.integers(0, 2, size=60)]
    vfeats = rng.normal(size=(30, 2))
    vonehot = np.eye(2)[rng.integers(0, 2, size=30)]
    cfg = TrainConfig(learning_rate=0.1, batch_size=10, max_epochs=100, patience=8, seed=2)
    model, history = train(tiny_mlp(seed=4), (None, feats, onehot), (None, vfeats, vonehot), cfg)
    assert len(history) < 100  # patience fired
    assert history.val_loss[history.best_epoch - 1] == min(history.val_loss)
    logits = model.forward_logits(None, vfeats, training=False)
    loss, _, _ = softmax_crossentropy(logits, vonehot)
    assert abs(loss - min(history.val_loss)) < 1e-12


def test_train_aborts_on_divergence():
    feats, onehot = make_toy_split()
    cfg = TrainConfig(learning_rate=1e200, batch_size=20, max_epochs=10, patience=10, seed=0)
    with pytest.raises(RuntimeError, match="diverged"):
        with np.errstate(all="ignore"):
            train(tiny_mlp(), (None, feats, onehot), (None, feats, onehot), cfg)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=300, max_epochs=200)


def test_model_forward_returns_probability_rows():
    rng = np.random.default_rng(13)
    model = tiny_mlp()
    probs = model.forward(None, rng.normal(size=(7, 2)))
    assert probs.shape == (7, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert probs.min() >= 0.0


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(17)
    model = Model(
        image_layers=[Conv3x3(1, 2, rng), ReLU(), MaxPool2x2(), Flatten(), Dense(8, 3, rng), ReLU()],
        feature_layers=[Dense(2, 3, rng), ReLU()],
        head_layers=[Dense(6, 5, rng)],
    )
    save_model(model, tmp_path, seed=17, config={"learning_rate": 1e-4})
    loaded, manifest = load_model(tmp_path)
    assert manifest["seed"] == 17
    assert manifest["config"]["learning_rate"] == 1e-4
    images = rng.normal(size=(3, 4, 4, 1))
    feats = rng.normal(size=(3, 2))
    np.testing.assert_array_equal(
        model.forward_logits(images, feats), loaded.forward_logits(images, feats)
    )


def test_history_csv(tmp_path):
    h = History(train_loss=[1.0], train_accuracy=[0.5], val_loss=[2.0], val_accuracy=[0.25], best_epoch=1)
    path = tmp_path / "history.csv"
    h.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
    assert lines[1].startswith("1,1.0,0.5,2.0,0.25")

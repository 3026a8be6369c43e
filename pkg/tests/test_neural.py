import math

import numpy as np
import pytest

from fsdm.hypno import Hypnodensity, Hypnogram, one_hot
from fsdm.neural import (
    PRIOR,
    ReferenceDenoiser,
    TrainConfig,
    grad_check,
    input_scale,
    load_model,
    save_model,
    timestep_embedding,
    train,
)
from fsdm.scorekit import ABSENT, Features, SensorBank, fsdm_denoise


def _sample_net(n_features=2, seed=0, channels=32):
    return ReferenceDenoiser.init(
        n_features=n_features, rng=np.random.default_rng(seed), channels=channels
    )


def _sample_case(net, n_epochs=6, seed=1, sigma=0.7):
    rng = np.random.default_rng(seed)
    h = Hypnogram.from_indices(rng.integers(0, 5, n_epochs))
    target = one_hot(h).values
    y_noisy = target + sigma * rng.standard_normal((5, n_epochs))
    cond = (
        Features(rng.standard_normal((net.n_features, n_epochs)))
        if net.n_features else ABSENT
    )
    return y_noisy, cond, sigma, target


def test_embedding_sigma_one_is_cos_sin_of_zero():
    z = timestep_embedding(1.0, 8)
    np.testing.assert_array_equal(z[:4], np.ones(4))
    np.testing.assert_array_equal(z[4:], np.zeros(4))


def test_embedding_first_frequency_is_one():
    for c in (4, 8, 32):
        z = timestep_embedding(math.e, c)
        assert z[0] == pytest.approx(math.cos(0.25), abs=1e-15)


def test_embedding_exp4_c4_fixture():
    z = timestep_embedding(math.exp(4.0), 4)
    expected = [math.cos(1.0), math.cos(0.001), math.sin(1.0), math.sin(0.001)]
    np.testing.assert_allclose(z, expected, rtol=0, atol=1e-15)


def test_embedding_rejects_bad_inputs():
    with pytest.raises(ValueError):
        timestep_embedding(0.0, 8)
    with pytest.raises(ValueError):
        timestep_embedding(1.0, 7)


def test_input_scale_at_zero_sigma():
    y = np.full((5, 2), 0.316)
    out = input_scale(y, 0.0, 0.3160)
    np.testing.assert_allclose(out, y / 0.3160)


def test_input_scale_large_sigma_shrink():
    y = np.ones((5, 1))
    out = input_scale(y, 40.0, 0.3160)
    np.testing.assert_allclose(out, 1.0 / math.sqrt(0.3160**2 + 1600.0))
    assert out[0, 0] == pytest.approx(1 / 40.0012, rel=1e-4)


def test_input_scale_zero_is_zero():
    np.testing.assert_array_equal(input_scale(np.zeros((5, 3)), 2.0, 0.3), np.zeros((5, 3)))


def test_forward_outputs_simplex_columns():
    net = _sample_net()
    y_noisy, cond, sigma, _ = _sample_case(net)
    out = net.forward(y_noisy, cond, sigma)
    np.testing.assert_allclose(out.sum(axis=0), 1.0, rtol=0, atol=1e-9)
    assert np.all(out >= 0)


def test_absent_equals_zero_features():
    net = _sample_net()
    rng = np.random.default_rng(2)
    y = rng.standard_normal((5, 4))
    a = net.forward(y, ABSENT, 0.5)
    b = net.forward(y, Features(np.zeros((2, 4))), 0.5)
    np.testing.assert_array_equal(a, b)


def test_epoch_permutation_locality():
    # Constant background; swapping the contents of two far-apart epochs
    # swaps the corresponding output columns and leaves epochs outside
    # both windows untouched.
    net = _sample_net()
    n_epochs, e1, e2 = 11, 2, 8
    y = np.tile(np.array([0.5, 0.1, 0.2, 0.1, 0.1])[:, None], (1, n_epochs))
    x = np.tile(np.array([0.3, -0.2])[:, None], (1, n_epochs))
    y2, x2 = y.copy(), x.copy()
    y2[:, e1] = np.array([0.0, 0.9, 0.0, 0.05, 0.05])
    x2[:, e1] = np.array([1.5, 0.7])
    out_before = net.forward(y2, Features(x2), 0.9)
    y3, x3 = y.copy(), x.copy()
    y3[:, e2] = y2[:, e1]
    x3[:, e2] = x2[:, e1]
    out_after = net.forward(y3, Features(x3), 0.9)
    np.testing.assert_allclose(out_after[:, e2], out_before[:, e1], atol=1e-12)
    for e in (0, 5, 11 - 1):
        if abs(e - e1) > 2 and abs(e - e2) > 2:
            np.testing.assert_allclose(out_after[:, e], out_before[:, e], atol=1e-12)


def test_shape_mismatch_rejected():
    net = _sample_net()
    with pytest.raises(ValueError):
        net.forward(np.zeros((5, 4)), Features(np.zeros((2, 5))), 1.0)
    with pytest.raises(ValueError):
        net.forward(np.zeros((5, 4)), Features(np.zeros((3, 4))), 1.0)


def test_perfect_prediction_has_zero_loss():
    # Saturated output bias makes the softmax an exact one-hot in floats,
    # so the per-epoch cross entropy is exactly -log(1) = 0.
    net = _sample_net(n_features=0)
    for key in net.weights:
        net.weights[key] = np.zeros_like(net.weights[key])
    net.weights["b_out"] = np.array([-100.0, 100.0, -100.0, -100.0, -100.0])
    h = Hypnogram.from_indices([1, 1, 1])
    target = one_hot(h).values
    loss = net.training_loss(target + 0.1, ABSENT, 0.5, target)
    assert loss == 0.0


def test_grad_check_small_eps():
    net = _sample_net()
    case = _sample_case(net)
    assert grad_check(net, case, eps=1e-5) < 1e-4


def test_grad_check_error_scales_quadratically_in_eps():
    net = _sample_net(seed=3)
    y_noisy, cond, sigma, target = _sample_case(net, seed=4)
    _, grads = net.loss_and_grads(y_noisy, cond, sigma, target)
    coords = []
    for name in net.PARAM_ORDER:
        coords.extend((name, i) for i in range(net.weights[name].size))
    picks = np.random.default_rng(5).choice(len(coords), size=120, replace=False)

    def aggregate(eps):
        diffs = []
        for pick in picks:
            name, flat = coords[int(pick)]
            w = net.weights[name]
            idx = np.unravel_index(flat, w.shape)
            orig = w[idx]
            w[idx] = orig + eps
            hi = net.training_loss(y_noisy, cond, sigma, target)
            w[idx] = orig - eps
            lo = net.training_loss(y_noisy, cond, sigma, target)
            w[idx] = orig
            diffs.append((hi - lo) / (2 * eps) - grads[name][idx])
        return np.linalg.norm(diffs)

    ratio = aggregate(1e-3) / aggregate(5e-4)
    assert 2.0 <= ratio <= 8.0


def test_grad_check_flat_direction_tolerated():
    # A weight with (numerically) zero gradient must not blow up the
    # relative error thanks to the absolute floor.
    net = _sample_net(n_features=0, seed=6)
    h = Hypnogram.from_indices([0, 0, 0, 0])
    target = one_hot(h).values
    case = (target + 0.01, ABSENT, 0.05, target)
    assert grad_check(net, case, eps=1e-5) < 1e-4


def test_grad_check_eps_range_enforced():
    net = _sample_net()
    case = _sample_case(net)
    with pytest.raises(ValueError):
        grad_check(net, case, eps=1e-7)


def test_training_deterministic_given_seed():
    h = Hypnogram.from_indices([0, 2, 4, 1])
    rng = np.random.default_rng(7)
    dataset = [(h, {"s": rng.standard_normal(4)})]
    cfg = TrainConfig(steps=50, seed=13)
    a = train(dataset, "s", cfg)
    b = train(dataset, "s", cfg)
    for key in a.weights:
        np.testing.assert_array_equal(a.weights[key], b.weights[key])


def test_single_atom_training_reaches_constant_denoiser():
    hstar = Hypnogram.from_indices([1, 1, 1, 1])
    net = train([(hstar, {})], PRIOR, TrainConfig(steps=2000, seed=0))
    target = one_hot(hstar).values
    worst = 0.0
    for i in range(5):
        y = target + 0.1 * np.random.default_rng(i).standard_normal((5, 4))
        worst = max(worst, float(np.abs(net.forward(y, ABSENT, 0.1) - target).max()))
    assert worst <= 0.05


def test_validation_loss_non_increasing_over_ten_step_windows():
    hstar = Hypnogram.from_indices([2, 2, 2])
    target = one_hot(hstar).values
    val_y = target + 0.3 * np.random.default_rng(99).standard_normal((5, 3))
    losses = []

    def record(step, net):
        losses.append(net.training_loss(val_y, ABSENT, 0.3, target))

    train([(hstar, {})], PRIOR, TrainConfig(steps=300, seed=1),
          callback=record, callback_every=10)
    assert len(losses) == 30
    assert np.all(np.diff(losses) <= 1e-9)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        train([], PRIOR, TrainConfig(steps=1))


def test_trained_denoiser_satisfies_contract_and_plugs_into_bank():
    h = Hypnogram.from_indices([0, 3, 2])
    rng = np.random.default_rng(8)
    dataset = [(h, {"s": rng.standard_normal(3)})]
    net = train(dataset, "s", TrainConfig(steps=30, seed=2))
    prior = train(dataset, PRIOR, TrainConfig(steps=30, seed=3))
    y = Hypnodensity(rng.standard_normal((5, 3)))
    out = net.evaluate(y, Features(rng.standard_normal((1, 3))), 0.8)
    assert out.on_manifold(1e-9)
    bank = SensorBank(prior, (("s", net),))
    combined = fsdm_denoise(y, 0.8, bank, [("s", Features(rng.standard_normal((1, 3))))])
    assert combined.on_manifold(1e-9)


def test_model_json_round_trip(tmp_path):
    net = _sample_net(seed=9)
    path = tmp_path / "model.json"
    save_model(path, net)
    loaded = load_model(path)
    assert loaded.window_radius == net.window_radius
    assert loaded.sigma_data == net.sigma_data
    for key in net.weights:
        np.testing.assert_array_equal(loaded.weights[key], net.weights[key])
    y = np.random.default_rng(10).standard_normal((5, 4))
    np.testing.assert_array_equal(
        loaded.forward(y, Features(np.zeros((2, 4))), 0.6),
        net.forward(y, Features(np.zeros((2, 4))), 0.6),
    )


def test_model_format_tag_checked(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other"}', encoding="utf-8")
    with pytest.raises(ValueError):
        load_model(path)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(p_augment=1.5)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)

"""ParamSet registration, binary checkpoint round trips, Adam against a
hand-stepped reference, and initializer statistics."""

import numpy as np
import pytest

from mrfusion import nn_core as nn


def small_paramset(dtype=np.float32, seed=21):
    rng = np.random.default_rng(seed)
    params = nn.ParamSet()
    params.add("a/w", rng.standard_normal((3, 4)).astype(dtype))
    params.add("a/b", rng.standard_normal(4).astype(dtype))
    params.add("bn/running_mean", rng.standard_normal(4).astype(dtype),
               trainable=False)
    return params


def test_paramset_rejects_duplicates_and_tracks_trainability():
    params = small_paramset()
    assert params.trainable == ["a/w", "a/b"]
    assert set(params.adam_m) == {"a/w", "a/b"}
    assert params.n_parameters() == 12 + 4 + 4
    with pytest.raises(ValueError):
        params.add("a/w", np.zeros(1))


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    params = small_paramset()
    params.step = 17
    params.adam_m["a/w"] += 0.25
    params.adam_v["a/b"] += 1.5
    path = tmp_path / "model.mrfw"
    params.save(path)

    other = small_paramset(seed=99)  # different values, same shapes
    other.load(path)
    for name in params.values:
        np.testing.assert_array_equal(other.values[name], params.values[name])
        assert other.values[name].dtype == np.float32
    assert other.step == 17
    for name in params.trainable:
        np.testing.assert_array_equal(other.adam_m[name], params.adam_m[name])
        np.testing.assert_array_equal(other.adam_v[name], params.adam_v[name])

    # identical state serializes to identical bytes
    path2 = tmp_path / "model2.mrfw"
    other.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_without_optimizer_state(tmp_path):
    params = small_paramset()
    params.step = 5
    path = tmp_path / "bare.mrfw"
    params.save(path, with_optimizer=False)
    values, opt = nn.read_checkpoint(path)
    assert opt is None
    assert set(values) == set(params.values)
    fresh = small_paramset(seed=42)
    fresh.load(path)  # leaves optimizer state untouched
    assert fresh.step == 0


def test_checkpoint_rejects_corruption(tmp_path):
    params = small_paramset()
    path = tmp_path / "ok.mrfw"
    params.save(path)
    raw = path.read_bytes()

    bad_magic = tmp_path / "bad_magic.mrfw"
    bad_magic.write_bytes(b"XXXXX" + raw[5:])
    with pytest.raises(nn.CheckpointError):
        nn.read_checkpoint(bad_magic)

    truncated = tmp_path / "trunc.mrfw"
    truncated.write_bytes(raw[:len(raw) // 2])
    with pytest.raises(nn.CheckpointError):
        nn.read_checkpoint(truncated)

    other = nn.ParamSet()
    other.add("different/w", np.zeros((3, 4), dtype=np.float32))
    with pytest.raises(nn.CheckpointError):
        other.load(path)

    shaped = nn.ParamSet()
    shaped.add("a/w", np.zeros((4, 3), dtype=np.float32))
    shaped.add("a/b", np.zeros(4, dtype=np.float32))
    shaped.add("bn/running_mean", np.zeros(4, dtype=np.float32),
               trainable=False)
    with pytest.raises(nn.CheckpointError):
        shaped.load(path)


def test_checkpoint_casts_to_float32(tmp_path):
    params = nn.ParamSet()
    params.add("p", np.array([1.0, 2.0], dtype=np.float64))
    path = tmp_path / "cast.mrfw"
    params.save(path)
    values, _ = nn.read_checkpoint(path)
    assert values["p"].dtype == np.float32
    np.testing.assert_array_equal(values["p"], [1.0, 2.0])


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def reference_adam(theta, grads_seq, lr, beta1, beta2, eps):
    """Textbook bias-corrected Adam, stepped one gradient at a time."""
    theta = theta.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads_seq, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def test_adam_matches_reference_over_many_steps():
    rng = np.random.default_rng(31)
    theta0 = rng.standard_normal(20)
    grads_seq = [rng.standard_normal(20) for _ in range(25)]
    lr, b1, b2, eps = 2e-4, 0.9, 0.999, 1e-8

    params = nn.ParamSet()
    params.add("p", theta0.copy())
    for g in grads_seq:
        nn.adam_step(params, {"p": g}, lr, b1, b2, eps)
    want = reference_adam(theta0, grads_seq, lr, b1, b2, eps)
    np.testing.assert_allclose(params.values["p"], want, rtol=1e-12, atol=0)
    assert params.step == 25


def test_adam_first_step_size_is_roughly_lr():
    # with bias correction, |step 1| ~= lr for any nonzero gradient scale
    for scale in (1e-6, 1.0, 1e6):
        params = nn.ParamSet()
        params.add("p", np.zeros(1))
        nn.adam_step(params, {"p": np.array([scale])}, lr=2e-4)
        # eps shifts the step by |eps/g|, ~1% at the smallest scale here
        assert params.values["p"][0] == pytest.approx(-2e-4, rel=0.02)


def test_adam_updates_only_trainable_params():
    params = nn.ParamSet()
    params.add("w", np.ones(3))
    params.add("stat", np.ones(3), trainable=False)
    nn.adam_step(params, {"w": np.ones(3)}, lr=0.1)
    assert not np.array_equal(params.values["w"], np.ones(3))
    np.testing.assert_array_equal(params.values["stat"], np.ones(3))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def test_he_uniform_bounds_and_spread():
    rng = np.random.default_rng(41)
    fan_in = 3 * 3 * 16
    w = nn.he_uniform(rng, (3, 3, 16, 32), fan_in, np.float32)
    limit = np.sqrt(6.0 / fan_in)
    assert w.dtype == np.float32
    assert np.all(np.abs(w) <= limit)
    assert np.abs(w).max() > 0.9 * limit  # actually fills the range
    assert abs(w.mean()) < 0.05 * limit


def test_layer_registration_defaults():
    params = nn.ParamSet()
    rng = np.random.default_rng(0)
    nn.Conv2D("c", 3, 2, 8).register(params, rng)
    nn.BatchNorm("bn", 8).register(params, rng)
    nn.Dense("d", 8, 4).register(params, rng)
    np.testing.assert_array_equal(params.values["c/b"], np.zeros(8))
    np.testing.assert_array_equal(params.values["bn/gamma"], np.ones(8))
    np.testing.assert_array_equal(params.values["bn/beta"], np.zeros(8))
    np.testing.assert_array_equal(params.values["bn/running_var"], np.ones(8))
    np.testing.assert_array_equal(params.values["d/b"], np.zeros(4))
    assert "bn/running_mean" not in params.trainable
    assert params.values["c/w"].shape == (3, 3, 2, 8)

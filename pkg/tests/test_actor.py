import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offloadlab.actor import (
    ActorModel,
    CheckpointError,
    FeatureScaling,
    KSchedule,
    ReplayMemory,
    TrainConfig,
    adapt_k,
    checkpoint_load,
    checkpoint_save,
    featurize,
    forward,
    grad_check,
    input_dim,
    quantize,
    remember,
    train_step,
)
from offloadlab.model import QueueState, SlotObservation, SystemConfig


def relu(v):
    return np.maximum(v, 0.0)


def test_featurize_wpt_mean_gains_are_ones():
    cfg = SystemConfig()
    obs = SlotObservation.from_gains(cfg.mean_gain)
    f = featurize(cfg, obs, "wpt", FeatureScaling(gain=cfg.mean_gain))
    assert np.array_equal(f, np.ones(10))


def test_featurize_lyapunov_layout():
    cfg = SystemConfig(arrival_rate=2e6)
    obs = SlotObservation(0, cfg.mean_gain, np.full(10, 2e6), QueueState.zeros(10))
    f = featurize(cfg, obs, "lyapunov")
    assert f.shape == (40,)
    assert np.all(f[20:] == 0)
    assert np.allclose(f[10:20], 1.0)
    assert input_dim(10, "wpt") == 10 and input_dim(10, "lyapunov") == 40


def test_forward_zero_model():
    m = ActorModel([3, 4, 2], [np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
    assert np.array_equal(forward(m, [1.0, -2.0, 3.0]), [0.5, 0.5])


def test_forward_hand_computed_tiny_model():
    W1 = np.array([[0.5, -1.0], [1.5, 0.25]])
    b1 = np.array([0.1, -0.2])
    W2 = np.array([[1.0, -0.5], [-2.0, 0.75]])
    b2 = np.array([0.0, 0.3])
    W3 = np.array([[0.8, -1.2]])
    b3 = np.array([0.05])
    m = ActorModel([2, 2, 2, 1], [W1, W2, W3], [b1, b2, b3])
    x = np.array([0.3, -0.7])
    # layer 1: [0.15 + 0.7 + 0.1, 0.45 - 0.175 - 0.2] = [0.95, 0.075]
    # layer 2: [0.95 - 0.0375, -1.9 + 0.05625 + 0.3] -> relu -> [0.9125, 0]
    # output: 0.8 * 0.9125 + 0.05 = 0.78
    want = 1.0 / (1.0 + math.exp(-0.78))
    assert forward(m, x)[0] == pytest.approx(want, abs=1e-12)
    manual = 1 / (1 + np.exp(-(W3 @ relu(W2 @ relu(W1 @ x + b1) + b2) + b3)))
    assert forward(m, x)[0] == pytest.approx(manual[0], abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=5, max_size=5))
def test_forward_range(values):
    m = ActorModel.for_problem(5, "wpt", rng=np.random.default_rng(0))
    out = forward(m, np.array(values) * 100)
    assert np.all(np.isfinite(out)) and np.all(out > 0) and np.all(out < 1)


def test_forward_dimension_mismatch():
    m = ActorModel.for_problem(4, "wpt")
    with pytest.raises(ValueError, match="input_dim"):
        forward(m, np.ones(5))


def test_model_shape_checks():
    with pytest.raises(ValueError, match="layers\\[0\\].weight"):
        ActorModel([2, 3], [np.zeros((2, 3))], [np.zeros(3)])


# ---------------------------------------------------------------------------
# quantizer


def test_quantize_hand_example():
    got = quantize([0.2, 0.6, 0.9], 3)
    assert got.tolist() == [[0, 1, 1], [0, 0, 1], [1, 1, 1]]


def test_quantize_half_is_zero():
    assert quantize([0.5, 0.5], 1).tolist() == [[0, 0]]


def test_quantize_k_range():
    with pytest.raises(ValueError):
        quantize([0.3, 0.7], 4)
    with pytest.raises(ValueError):
        quantize([0.3, 0.7], 0)


def order_preserving(xhat, cand):
    hi = xhat[:, None] > xhat[None, :]
    return not np.any(hi & (cand[:, None] < cand[None, :]))


def test_quantize_properties_random():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(1, 13))
        xhat = rng.random(n)
        if np.unique(xhat).size < n:
            continue
        C = quantize(xhat, n + 1)
        assert np.array_equal(C[0], (xhat > 0.5).astype(np.int8))
        assert np.unique(C, axis=0).shape[0] == n + 1
        for cand in C:
            assert order_preserving(xhat, cand)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=12), st.data())
def test_quantize_properties_hypothesis(values, data):
    xhat = np.array(values)
    k = data.draw(st.integers(1, xhat.size + 1))
    C = quantize(xhat, k)
    assert C.shape == (k, xhat.size)
    assert np.array_equal(C[0], (xhat > 0.5).astype(np.int8))
    for cand in C:
        assert order_preserving(xhat, cand)


def test_noisy_quantizer_seeded():
    xhat = np.array([0.1, 0.45, 0.55, 0.8, 0.3])
    a = quantize(xhat, 6, "noisy", np.random.default_rng(5), 0.5)
    b = quantize(xhat, 6, "noisy", np.random.default_rng(5), 0.5)
    assert np.array_equal(a, b)
    assert np.array_equal(a[0], (xhat > 0.5).astype(np.int8))
    with pytest.raises(ValueError):
        quantize(xhat, 2, "noisy")


def test_quantize_deterministic():
    xhat = np.random.default_rng(1).random(8)
    assert np.array_equal(quantize(xhat, 9), quantize(xhat, 9))


# ---------------------------------------------------------------------------
# replay memory


def test_memory_single_insert():
    mem = ReplayMemory(4, 2, 2)
    remember(mem, [1.0, 2.0], [0, 1])
    assert len(mem) == 1


def test_memory_overwrites_oldest():
    mem = ReplayMemory(4, 1, 1)
    for i in range(5):
        mem.add([float(i)], [i % 2])
    feats, _ = mem.ordered()
    assert len(mem) == 4
    assert feats[:, 0].tolist() == [1.0, 2.0, 3.0, 4.0]


def test_memory_circular_2000():
    mem = ReplayMemory(1024, 1, 1)
    for i in range(1, 2001):
        mem.add([float(i)], [0])
    feats, _ = mem.ordered()
    assert feats[:, 0].tolist() == [float(i) for i in range(977, 2001)]
    assert mem.write_cursor == 2000 % 1024


def test_memory_sample_no_duplicates():
    mem = ReplayMemory(256, 1, 1)
    for i in range(256):
        mem.add([float(i)], [0])
    feats, _ = mem.sample(128, np.random.default_rng(0))
    assert np.unique(feats).size == 128


def test_memory_label_length():
    mem = ReplayMemory(4, 2, 3)
    with pytest.raises(ValueError):
        mem.add([0.0, 0.0], [1, 0])


# ---------------------------------------------------------------------------
# training


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=2048)
    with pytest.raises(ValueError):
        TrainConfig(train_interval=0)
    with pytest.raises(ValueError):
        TrainConfig(quantizer_kind="other")


def test_loss_at_half_is_ln2():
    m = ActorModel([3, 4, 5], [np.zeros((4, 3)), np.zeros((5, 4))], [np.zeros(4), np.zeros(5)])
    rng = np.random.default_rng(0)
    X = rng.random((16, 3))
    Y = rng.integers(0, 2, (16, 5))
    assert m.loss_and_grads(X, Y)[0] == pytest.approx(math.log(2), abs=1e-15)


def test_train_step_skips_underfilled():
    m = ActorModel.for_problem(3, "wpt")
    mem = ReplayMemory(256, 3, 3)
    for _ in range(10):
        mem.add(np.ones(3), [1, 0, 1])
    assert train_step(m, mem, TrainConfig(batch_size=128, memory_size=256), np.random.default_rng(0)) is None


def test_overfit_fixed_memory():
    rng = np.random.default_rng(3)
    n = 5
    m = ActorModel.for_problem(n, "wpt", rng=rng)
    mem = ReplayMemory(128, n, n)
    for _ in range(128):
        x = rng.exponential(1.0, n)
        mem.add(x, (x > np.median(x)).astype(float))
    tc = TrainConfig(batch_size=128, memory_size=128)
    losses = [train_step(m, mem, tc, rng) for _ in range(500)]
    ma = np.convolve(losses, np.ones(25) / 25, mode="valid")
    assert ma[-1] < ma[0]
    assert losses[-1] < 0.05


def test_grad_check_tiny_model():
    rng = np.random.default_rng(4)
    m = ActorModel([3, 6, 5, 2], rng=rng)
    X = rng.normal(size=(8, 3))
    Y = rng.integers(0, 2, (8, 2)).astype(float)
    assert grad_check(m, (X, Y), 1e-5) <= 1e-4
    assert grad_check(m, (X, Y), 1e-4) <= 1e-4


def test_grad_zero_at_fitted_point():
    m = ActorModel([2, 3, 2], [np.ones((3, 2)), np.zeros((2, 3))], [np.zeros(3), np.zeros(2)])
    X = np.ones((4, 2))
    Y = np.full((4, 2), 0.5)  # sigmoid(0) matches the soft labels exactly
    _, grads = m.loss_and_grads(X, Y)
    assert max(np.abs(g).max() for g in grads) == 0.0
    assert grad_check(m, (X, Y)) <= 1e-4


# ---------------------------------------------------------------------------
# adaptive K


@pytest.mark.parametrize("history, want", [([1, 3, 2], 4), ([1, 1, 1], 2), ([11, 4], 11)])
def test_adapt_k(history, want):
    sched = KSchedule(10)
    for idx in history:
        sched.record(idx - 1)
    assert adapt_k(sched, 10) == want
    assert sched.history == []


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    cfg = SystemConfig()
    m = ActorModel.for_problem(10, "wpt", rng=np.random.default_rng(9))
    path = checkpoint_save(m, FeatureScaling.for_config(cfg), tmp_path / "a.json", {"k": 4})
    m2, scaling, meta = checkpoint_load(path)
    X = np.random.default_rng(1).exponential(1.0, (100, 10))
    assert np.array_equal(forward(m, X), forward(m2, X))
    assert np.array_equal(scaling.gain, cfg.mean_gain)
    assert meta == {"k": 4}


def test_checkpoint_bad_dims(tmp_path):
    m = ActorModel([2, 3, 1])
    path = checkpoint_save(m, None, tmp_path / "a.json")
    doc = json.loads(path.read_text())
    doc["layer_dims"] = [2, 4, 1]
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="layers\\[0\\]"):
        checkpoint_load(path)


def test_checkpoint_malformed(tmp_path):
    path = tmp_path / "a.json"
    path.write_text("{not json")
    with pytest.raises(CheckpointError):
        checkpoint_load(path)
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(CheckpointError, match="format"):
        checkpoint_load(path)

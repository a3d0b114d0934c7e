import math

import numpy as np
import pytest

from offloadlab.baselines import all_binary, enumerate_opt
from offloadlab.checks import random_lyapunov_instance, random_wpt_instance
from offloadlab.critic import (
    SolverTolerances,
    best_action,
    first_argmax,
    g_fn,
    g_inverse,
    g_inverse_bisect,
    oracle_grid,
    solve_batch,
    solve_lyapunov,
    solve_lyapunov_batch,
    solve_lyapunov_closed_batch,
    solve_wpt,
    solve_wpt_batch,
    solve_wpt_nested,
    wpt_inner_allocation,
)
from offloadlab.model import (
    QueueState,
    SlotObservation,
    SystemConfig,
    check_feasible,
    execute,
    gen_channels,
    lyapunov_score,
    utility_wpt,
)


def unit_link_config():
    # c_1 = mu P h^2 / N0 = 1 and B / v_u = 1 at h = 1
    return SystemConfig(n_devices=1, es_tx_power=1.0, harvest_eff=1.0, noise_power=1.0,
                        bandwidth=1.0, comm_overhead=1.0, weights=[1.0], mean_gain=[1.0])


def test_tolerances_validated():
    with pytest.raises(ValueError):
        SolverTolerances(outer_tol=0)
    with pytest.raises(ValueError):
        SolverTolerances(max_iters=5)


def test_g_inverse_matches_bisection():
    y = np.geomspace(1e-14, 300, 400)
    z = g_inverse(y)
    assert np.allclose(g_fn(z), y, rtol=1e-10)
    inside = y < 20  # the reference bracket ends at z = 1e12
    assert np.allclose(z[inside], g_inverse_bisect(y[inside]), rtol=1e-8)


def test_g_increasing():
    z = np.geomspace(1e-8, 1e8, 1000)
    assert np.all(np.diff(g_fn(z)) > 0)


def test_all_local_closed_form():
    cfg = SystemConfig(n_devices=4)
    h = gen_channels(cfg, np.random.default_rng(0))
    res = solve_wpt(cfg, h, np.zeros(4))
    assert res.action.wpt_frac == cfg.slot_len
    want = np.sum(cfg.weights * cfg.local_eta * np.cbrt(h * cfg.slot_len))
    assert res.score == pytest.approx(want, rel=1e-12)


def test_single_offloader_unit_problem():
    cfg = unit_link_config()
    res = solve_wpt(cfg, [1.0], [1])
    a = np.arange(1, 100000) * 1e-5
    grid = ((1 - a) * np.log2(1 + a / (1 - a))).max()
    assert res.score == pytest.approx(grid, rel=1e-4)
    assert res.score >= grid * (1 - 1e-12)


def test_fast_and_nested_agree():
    rng = np.random.default_rng(3)
    for _ in range(15):
        n = int(rng.integers(2, 7))
        cfg, obs, x = random_wpt_instance(rng, n)
        fast = solve_wpt(cfg, obs.gains, x).score
        nested = solve_wpt_nested(cfg, obs.gains, x).score
        assert fast == pytest.approx(nested, rel=1e-7)
        assert fast >= nested * (1 - 1e-9)


def test_wpt_matches_oracle_small():
    rng = np.random.default_rng(4)
    for _ in range(10):
        cfg, obs, x = random_wpt_instance(rng, 3)
        s = solve_wpt(cfg, obs.gains, x).score
        o = oracle_grid(cfg, obs.gains, x)[1]
        assert abs(s - o) <= 1e-3 * o


def test_oracle_all_local_gives_full_slot():
    cfg = SystemConfig(n_devices=3)
    action, score = oracle_grid(cfg, gen_channels(cfg, np.random.default_rng(1)), np.zeros(3))
    assert action.wpt_frac == cfg.slot_len


def test_oracle_refinement_converges():
    cfg, obs, x = random_wpt_instance(np.random.default_rng(8), 2)
    x = np.array([1, 0])
    coarse = oracle_grid(cfg, obs.gains, x, 0.01)[1]
    fine = oracle_grid(cfg, obs.gains, x, 0.001)[1]
    assert abs(fine - coarse) <= 1e-4 * fine


def test_oracle_dimension_guard():
    cfg = SystemConfig(n_devices=5)
    with pytest.raises(ValueError, match="offloaders"):
        oracle_grid(cfg, np.full(5, 1e-6), np.ones(5))


def test_batch_independent_of_companions():
    cfg = SystemConfig()
    h = gen_channels(cfg, np.random.default_rng(5))
    X = all_binary(10)[::37]
    batch = solve_wpt_batch(cfg, h, X)[2]
    single = np.array([solve_wpt_batch(cfg, h, row[None, :])[2][0] for row in X])
    assert np.array_equal(batch, single)


def test_wpt_actions_feasible_and_rechecked():
    cfg = SystemConfig()
    rng = np.random.default_rng(6)
    for _ in range(20):
        h = gen_channels(cfg, rng)
        x = rng.integers(0, 2, 10)
        res = solve_wpt(cfg, h, x)
        check_feasible(cfg, res.action, "wpt")
        assert res.score == pytest.approx(utility_wpt(cfg, h, res.action), rel=1e-12)
        assert res.solve_time >= 0


def test_wpt_permutation_equivariance():
    cfg = SystemConfig(n_devices=6)
    rng = np.random.default_rng(7)
    h = gen_channels(cfg, rng)
    x = np.array([1, 0, 1, 1, 0, 0])
    perm = rng.permutation(6)
    pcfg = cfg.with_(weights=cfg.weights[perm], mean_gain=cfg.mean_gain[perm])
    a = solve_wpt(cfg, h, x).score
    b = solve_wpt(pcfg, h[perm], x[perm]).score
    assert b == pytest.approx(a, rel=1e-10)


def test_weight_scaling_keeps_argmax():
    cfg = SystemConfig(n_devices=6)
    h = gen_channels(cfg, np.random.default_rng(9))
    X = all_binary(6)
    base = solve_wpt_batch(cfg, h, X)[2]
    scaled = solve_wpt_batch(cfg.with_(weights=cfg.weights * 3.0), h, X)[2]
    assert np.allclose(scaled, 3.0 * base, rtol=1e-9)
    assert first_argmax(scaled) == first_argmax(base)


def test_dual_bisection_monotone():
    cfg, obs, _ = random_wpt_instance(np.random.default_rng(10), 4)
    trace = []
    wpt_inner_allocation(cfg, obs.gains, np.array([1, 1, 0, 1]), 0.4, trace=trace)
    nus = np.array([t[0] for t in trace])
    shares = np.array([t[1] for t in trace])
    order = np.argsort(nus)
    assert np.all(np.diff(shares[order]) < 0)


def test_input_validation():
    cfg = SystemConfig(n_devices=3)
    with pytest.raises(ValueError, match="length"):
        solve_wpt(cfg, np.ones(3) * 1e-6, [1, 0])
    with pytest.raises(ValueError, match="finite"):
        solve_wpt(cfg, np.array([1e-6, np.nan, 1e-6]), [1, 0, 0])


# ---------------------------------------------------------------------------
# drift-plus-penalty


def lyap_obs(q, y, h):
    q, y, h = (np.asarray(v, dtype=float) for v in (q, y, h))
    return SlotObservation(0, h, np.zeros_like(h), QueueState(q, y))


def test_lyapunov_empty_queues_idle():
    cfg = SystemConfig(n_devices=3)
    obs = lyap_obs(np.zeros(3), [0.1, 0.0, 0.2], [1e-6, 2e-6, 3e-6])
    for x in ([0, 0, 0], [1, 1, 1], [1, 0, 1]):
        res = solve_lyapunov(cfg, obs, x)
        assert res.score == 0.0
        assert np.all(res.action.time_shares == 0) and np.all(res.action.cpu_freq == 0)


def test_lyapunov_unit_frequency():
    cfg = SystemConfig(n_devices=1, cycles_per_bit=1.0, cap_coeff=1.0, f_max=2.0, lyapunov_v=1.0,
                       weights=[1.0], bit_unit=1.0, energy_unit=1.0)
    obs = lyap_obs([2.0], [1.0], [1e-6])  # Q + V w = 3
    assert solve_lyapunov(cfg, obs, [0]).action.cpu_freq[0] == pytest.approx(1.0)


def test_lyapunov_never_overserves():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(1, 7))
        cfg, obs, _ = random_lyapunov_instance(rng, n)
        for x in all_binary(n)[:: max(1, 2**n // 8)]:
            res = solve_lyapunov(cfg, obs, x)
            check_feasible(cfg, res.action, "lyapunov")
            bits = execute(cfg, obs, res.action).processed_bits
            assert np.all(bits <= obs.queues.data_q * (1 + 1e-12))
            assert res.score == pytest.approx(lyapunov_score(cfg, obs, res.action)[0], rel=1e-9, abs=1e-12)


def test_lyapunov_skips_worthless_offloaders():
    # a huge energy backlog makes offloading worthless for device 0
    cfg = SystemConfig(n_devices=2)
    obs = lyap_obs([1e6, 1e6], [1e6, 0.0], [1e-7, 1e-6])
    res = solve_lyapunov(cfg, obs, [1, 1])
    assert res.action.time_shares[0] == 0 and res.action.tx_power[0] == 0
    assert res.action.time_shares[1] > 0


def test_lyapunov_dominates_closed_form():
    rng = np.random.default_rng(12)
    for _ in range(40):
        n = int(rng.integers(1, 6))
        cfg, obs, _ = random_lyapunov_instance(rng, n)
        X = all_binary(n)
        exact = solve_lyapunov_batch(cfg, obs, X)[3]
        closed = solve_lyapunov_closed_batch(cfg, obs, X)[3]
        assert np.all(exact >= closed - 1e-9 * np.abs(closed))


def test_lyapunov_stretches_capped_offloader():
    # one offloader with a small backlog: spreading it over more time saves energy
    cfg = SystemConfig(n_devices=1, weights=[1.0])
    obs = lyap_obs([1e5], [0.2], [2e-6])
    exact = solve_lyapunov(cfg, obs, [1])
    closed = solve_lyapunov_closed_batch(cfg, obs, np.array([[1]]))
    assert exact.score > closed[3][0]
    assert exact.action.time_shares[0] > closed[2][0, 0]
    assert execute(cfg, obs, exact.action).processed_bits[0] == pytest.approx(1e5, rel=1e-9)


def test_lyapunov_matches_oracle_small():
    rng = np.random.default_rng(13)
    for i in range(10):
        cfg, obs, x = random_lyapunov_instance(rng, 1 + i % 2)
        s = solve_lyapunov(cfg, obs, x).score
        o = oracle_grid(cfg, obs, x, mode="lyapunov")[1]
        assert s >= 0.98 * o - 1e-12


def test_lyapunov_batch_independent():
    cfg, obs, _ = random_lyapunov_instance(np.random.default_rng(14), 6)
    X = all_binary(6)
    batch = solve_lyapunov_batch(cfg, obs, X)[3]
    single = np.array([solve_lyapunov_batch(cfg, obs, row[None, :])[3][0] for row in X])
    assert np.allclose(batch, single, rtol=1e-12, atol=0)


# ---------------------------------------------------------------------------
# candidate selection


def test_first_argmax_ties():
    assert first_argmax([2.0, 3.5, 3.5]) == 1


def test_best_action_tie_break_with_duplicates():
    cfg = SystemConfig(n_devices=3)
    obs = SlotObservation.from_gains(gen_channels(cfg, np.random.default_rng(15)))
    X = np.array([[0, 0, 0], [1, 0, 0], [1, 0, 0]])
    scores = solve_batch(cfg, obs, X, "wpt")
    best, idx = best_action(cfg, obs, X, "wpt")
    assert idx == first_argmax(scores)
    assert best.score == scores[idx]


def test_best_action_single_and_empty():
    cfg = SystemConfig(n_devices=2)
    obs = SlotObservation.from_gains([1e-6, 2e-6])
    best, idx = best_action(cfg, obs, [[1, 0]], "wpt")
    assert idx == 0 and best.score == solve_wpt(cfg, obs.gains, [1, 0]).score
    with pytest.raises(ValueError):
        best_action(cfg, obs, np.zeros((0, 2)), "wpt")


@pytest.mark.parametrize("mode", ["wpt", "lyapunov"])
def test_best_action_all_candidates_equals_enumeration(mode):
    rng = np.random.default_rng(16)
    cfg, obs, _ = random_lyapunov_instance(rng, 4)
    best, _ = best_action(cfg, obs, all_binary(4), mode)
    assert best.score == enumerate_opt(cfg, obs, mode).score


def test_sequential_and_vectorized_agree():
    cfg = SystemConfig()
    obs = SlotObservation.from_gains(gen_channels(cfg, np.random.default_rng(17)))
    X = all_binary(10)[::101]
    a, ia = best_action(cfg, obs, X, "wpt", vectorized=True)
    b, ib = best_action(cfg, obs, X, "wpt", vectorized=False)
    assert ia == ib and a.score == b.score


def test_unknown_mode():
    cfg = SystemConfig(n_devices=1)
    with pytest.raises(ValueError, match="mode"):
        solve_batch(cfg, SlotObservation.from_gains([1e-6]), [[1]], "other")


def test_score_finite_for_extreme_gains():
    cfg = SystemConfig(n_devices=3)
    h = np.array([1e-12, 1e-3, 1e-8])
    for x in all_binary(3):
        assert math.isfinite(solve_wpt(cfg, h, x).score)

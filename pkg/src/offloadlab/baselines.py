"""Reference offloading policies: enumeration, coordinate descent, LC, EC, Myopic."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .critic import DEFAULT_TOL, SolverTolerances, first_argmax, solve, solve_batch
from .model import LN2, OffloadAction, SlotObservation, SystemConfig, execute

MAX_ENUM_DEVICES = 20
_ENUM_CHUNK = 4096


@dataclass
class BaselineResult:
    method: str
    action: OffloadAction
    score: float
    solver_calls: int
    wall_time: float  # microseconds


def all_binary(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Binary vectors in lexicographic order (x[0] most significant)."""
    stop = 2**n if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> (n - 1 - np.arange(n))) & 1).astype(np.int8)


def _scores(cfg, obs, X, mode, tol, vectorized):
    if vectorized:
        return solve_batch(cfg, obs, X, mode, tol)
    return np.array([solve_batch(cfg, obs, row[None, :], mode, tol)[0] for row in X])


def enumerate_opt(cfg: SystemConfig, obs: SlotObservation, mode: str,
                  tol: SolverTolerances = DEFAULT_TOL) -> BaselineResult:
    n = cfg.n_devices
    if n > MAX_ENUM_DEVICES:
        raise ValueError(f"enumerate_opt: N={n} exceeds the {MAX_ENUM_DEVICES}-device guard")
    start = time.perf_counter()
    best_score, best_x = -np.inf, None
    for lo in range(0, 2**n, _ENUM_CHUNK):
        X = all_binary(n, lo, min(lo + _ENUM_CHUNK, 2**n))
        sc = solve_batch(cfg, obs, X, mode, tol)
        k = first_argmax(sc)
        if sc[k] > best_score:
            best_score, best_x = sc[k], X[k]
    res = solve(cfg, obs, best_x, mode, tol)
    return BaselineResult("enum", res.action, res.score, 2**n, (time.perf_counter() - start) * 1e6)


def _fixed(cfg, obs, mode, x, name, tol):
    start = time.perf_counter()
    res = solve(cfg, obs, x, mode, tol)
    return BaselineResult(name, res.action, res.score, 1, (time.perf_counter() - start) * 1e6)


def all_local(cfg: SystemConfig, obs: SlotObservation, mode: str,
              tol: SolverTolerances = DEFAULT_TOL) -> BaselineResult:
    return _fixed(cfg, obs, mode, np.zeros(cfg.n_devices, dtype=np.int8), "lc", tol)


def all_edge(cfg: SystemConfig, obs: SlotObservation, mode: str,
             tol: SolverTolerances = DEFAULT_TOL) -> BaselineResult:
    return _fixed(cfg, obs, mode, np.ones(cfg.n_devices, dtype=np.int8), "ec", tol)


def coordinate_descent(cfg: SystemConfig, obs: SlotObservation, mode: str, init=None,
                       tol: SolverTolerances = DEFAULT_TOL, vectorized: bool = True) -> BaselineResult:
    """Greedy single-device mode flips until no flip strictly improves.

    Without ``init`` the search starts from the better of all-local and
    all-edge. ``vectorized=False`` issues one solver call per candidate.
    """
    n = cfg.n_devices
    start = time.perf_counter()
    calls = 0
    if init is None:
        ends = np.array([np.zeros(n), np.ones(n)], dtype=np.int8)
        sc = _scores(cfg, obs, ends, mode, tol, vectorized)
        calls += 2
        k = first_argmax(sc)
        x, score = ends[k].copy(), sc[k]
    else:
        x = np.asarray(init, dtype=np.int8).copy()
        if x.shape != (n,):
            raise ValueError(f"init: expected length {n}, got {x.size}")
        score = _scores(cfg, obs, x[None, :], mode, tol, vectorized)[0]
        calls += 1
    flips = np.eye(n, dtype=np.int8)
    for _ in range(n * n):
        nbrs = x[None, :] ^ flips
        sc = _scores(cfg, obs, nbrs, mode, tol, vectorized)
        calls += n
        k = first_argmax(sc)
        if not sc[k] > score + 1e-12 * abs(score):
            break
        x, score = nbrs[k], sc[k]
    res = solve(cfg, obs, x, mode, tol)
    name = "lycd" if mode == "lyapunov" else "cd"
    return BaselineResult(name, res.action, res.score, calls, (time.perf_counter() - start) * 1e6)


# ---------------------------------------------------------------------------
# Myopic


MYOPIC_BUDGETS = ("paced", "horizon")


@dataclass
class BudgetTracker:
    """Cumulative energy spent per device and the number of slots elapsed.

    ``paced`` (default) idles a device once it is ahead of the line
    gamma * T * (t + 1). ``horizon`` grants the whole budget
    gamma * T * horizon up front and idles a device only after it is spent.
    """

    spent: np.ndarray
    t: int = 0
    mode: str = "paced"
    horizon: int | None = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MYOPIC_BUDGETS:
            raise ValueError(f"budget mode must be one of {MYOPIC_BUDGETS}")
        if self.mode == "horizon" and (self.horizon is None or self.horizon < 1):
            raise ValueError("horizon budget needs a positive horizon")

    @classmethod
    def fresh(cls, n: int, mode: str = "paced", horizon: int | None = None) -> "BudgetTracker":
        return cls(np.zeros(n), mode=mode, horizon=horizon)

    def eligible(self, cfg: SystemConfig) -> np.ndarray:
        slots = self.t + 1 if self.mode == "paced" else self.horizon
        return self.spent < cfg.power_budget * cfg.slot_len * slots


def _myopic_allocation(cfg, obs, X, eligible):
    """Queue-blind allocation: f_max locally, p_max offloading, time to the best rates."""
    T = cfg.slot_len
    w = cfg.weights
    X = X & eligible[None, :]
    local = ~X & eligible[None, :]
    rho = cfg.link_rate * np.log1p(cfg.p_max * obs.gains / cfg.noise_power) / LN2
    order = np.lexsort((np.arange(cfg.n_devices), -w * rho))
    # without backlog information each offloader could use the whole slot;
    # slot time goes to offloaders in order of weighted rate
    cap = np.where(X[:, order], T, 0.0)
    before = np.cumsum(cap, axis=1) - cap
    tau = np.zeros(X.shape)
    tau[:, order] = np.clip(T - before, 0.0, cap)
    f = np.where(local, cfg.f_max, 0.0)
    p = np.where(tau > 0, cfg.p_max, 0.0)
    blind = (f * T / cfg.cycles_per_bit) @ w + (tau * rho) @ w
    return f, p, tau, blind


def myopic(cfg: SystemConfig, obs: SlotObservation, budget_tracker: BudgetTracker) -> BaselineResult:
    """Queue-blind rate maximizer that idles devices whose energy budget is used up.

    Selection ignores the data queues; the executed action is trimmed to the
    bits actually queued, and the tracker is charged the realized energy.
    """
    start = time.perf_counter()
    n = cfg.n_devices
    T = cfg.slot_len
    eligible = budget_tracker.eligible(cfg)
    calls = 0
    x = np.zeros(n, dtype=bool)
    score = _myopic_allocation(cfg, obs, x[None, :], eligible)[3][0]
    calls += 1
    flips = np.eye(n, dtype=bool)
    for _ in range(n * n):
        nbrs = x[None, :] ^ flips
        sc = _myopic_allocation(cfg, obs, nbrs, eligible)[3]
        calls += n
        k = first_argmax(sc)
        if not sc[k] > score + 1e-12 * abs(score):
            break
        x, score = nbrs[k], sc[k]
    x = x & eligible
    f, p, tau, _ = (v[0] for v in _myopic_allocation(cfg, obs, x[None, :], eligible))
    # devices stop once their backlog is drained
    Q = obs.queues.data_q
    rho = cfg.link_rate * np.log1p(p * obs.gains / cfg.noise_power) / LN2
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(x & (rho > 0), np.minimum(tau, Q / rho), 0.0)
    f = np.minimum(f, cfg.cycles_per_bit * Q / T)
    p = np.where(tau > 0, p, 0.0)
    action = OffloadAction(x=x.astype(np.int8), time_shares=tau, cpu_freq=f, tx_power=p)
    outcome = execute(cfg, obs, action)
    budget_tracker.spent = budget_tracker.spent + outcome.energy_used
    budget_tracker.t += 1
    return BaselineResult("myopic", action, outcome.utility, calls, (time.perf_counter() - start) * 1e6)

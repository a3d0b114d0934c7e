"""Optimization critic: optimal resource allocation for a fixed binary decision.

``solve_wpt_batch`` solves the wireless-powered subproblem for many candidate
decisions at once. The problem is jointly concave in (a, tau), and every KKT
point is interior, so the optimum is the unique root of a scalar equation in
the dual price of slot time. With t = nu ln2 / (B/v_u):

* offloader i runs at SNR z_i with g(z_i) = t / w_i, g(z) = ln(1+z) - z/(1+z),
  and takes tau_i = c_i a / z_i;
* the harvesting fraction satisfies (1/3) S' a^(-2/3) = t - sum_i w_i c_i / (1+z_i)
  where S' collects the local devices' coefficients;
* a + sum_i tau_i = T pins t.

The root is found by safeguarded Newton iterations in log t, row by row, so a
candidate's result does not depend on which other candidates share the batch.
``solve_wpt_nested`` keeps the textbook golden-section / dual-bisection route
as an independent reference.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .model import (
    LN2,
    FeasibilityError,
    InvariantError,
    OffloadAction,
    SlotObservation,
    SystemConfig,
    check_feasible,
    lyapunov_score,
    offload_term,
    utility_wpt,
)

MODES = ("wpt", "lyapunov")


@dataclass(frozen=True)
class SolverTolerances:
    outer_tol: float = 1e-6
    dual_tol: float = 1e-9
    inner_tol: float = 1e-10
    max_iters: int = 200

    def __post_init__(self):
        if min(self.outer_tol, self.dual_tol, self.inner_tol) <= 0:
            raise ValueError("tolerances must be strictly positive")
        if self.max_iters < 10:
            raise ValueError("max_iters must be >= 10")


DEFAULT_TOL = SolverTolerances()


@dataclass
class ScoredAction:
    action: OffloadAction
    score: float
    solve_time: float  # microseconds


# ---------------------------------------------------------------------------
# g(z) = ln(1+z) - z/(1+z) and its inverse


def g_fn(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        direct = np.log1p(z) - z / (1.0 + z)
        series = z * z * (0.5 + z * (-2 / 3 + z * (0.75 + z * (-0.8 + z * (5 / 6)))))
    return np.where(z < 1e-3, series, direct)


_S_GRID = np.linspace(-40.0, 700.0, 40001)
_LOGG_GRID = np.log(g_fn(np.exp(_S_GRID)))


def g_inverse(y, newton_steps: int = 3):
    """Solve g(z) = y for z > 0 (vectorized): table lookup, then Newton in log z."""
    y = np.asarray(y, dtype=float)
    ly = np.log(y)
    s = np.interp(ly, _LOGG_GRID, _S_GRID)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(newton_steps):
            z = np.exp(s)
            gz = g_fn(z)
            # d ln g / d ln z = z^2 / ((1+z)^2 g)
            r = z / (1.0 + z)
            step = (np.log(gz) - ly) * gz / (r * r)
            s = np.clip(s - step, _S_GRID[0], _S_GRID[-1])
    return np.exp(s)


def g_inverse_bisect(y, tol: float = 1e-10, max_iters: int = 200):
    """Reference inverse of g by bisection in log z over [1e-12, 1e12]."""
    y = np.asarray(y, dtype=float)
    lo = np.full(y.shape, math.log(1e-12))
    hi = np.full(y.shape, math.log(1e12))
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        above = g_fn(np.exp(mid)) > y
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo < tol):
            break
    return np.exp(0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# wireless-powered subproblem

_U_LO, _U_HI = -75.0, 6.3  # bracket for log t


def _validate_inputs(cfg: SystemConfig, h, X):
    h = np.asarray(h, dtype=float)
    if h.shape != (cfg.n_devices,):
        raise ValueError(f"gains: expected length {cfg.n_devices}, got {h.size}")
    if not np.all(np.isfinite(h)):
        raise ValueError("gains must be finite")
    X = np.atleast_2d(np.asarray(X))
    if X.shape[1] != cfg.n_devices:
        raise ValueError(f"x: expected length {cfg.n_devices}, got {X.shape[1]}")
    return h, X.astype(bool)


def _newton_log(fun, u0, active, tol, max_iters, lo=None, hi=None):
    """Root of increasing fun(u) per row, safeguarded by a running bracket.

    fun(u, rows) -> (value, derivative) evaluated on the selected rows only.
    Rows are frozen once their Newton step falls below tol.
    """
    u = u0.copy()
    lo = np.full_like(u, _U_LO) if lo is None else lo.copy()
    hi = np.full_like(u, _U_HI) if hi is None else hi.copy()
    todo = active.copy()
    for _ in range(max_iters):
        rows = np.flatnonzero(todo)
        if rows.size == 0:
            break
        ur = u[rows]
        val, der = fun(ur, rows)
        lo_r = np.where(val < 0, ur, lo[rows])
        hi_r = np.where(val > 0, ur, hi[rows])
        with np.errstate(invalid="ignore", divide="ignore"):
            un = ur - val / der
        bad = ~np.isfinite(un) | (un <= lo_r) | (un >= hi_r)
        un = np.where(bad, 0.5 * (lo_r + hi_r), un)
        done = (np.abs(un - ur) <= tol) | (val == 0) | (hi_r - lo_r <= tol)
        u[rows] = un
        lo[rows], hi[rows] = lo_r, hi_r
        todo[rows[done]] = False
    return u


def solve_wpt_batch(cfg: SystemConfig, h, X, tol: SolverTolerances = DEFAULT_TOL):
    """Optimal (a, tau) and utility for each row of X.

    Returns (a: (M,), tau: (M, N), score: (M,)).
    """
    h, X = _validate_inputs(cfg, h, X)
    M, N = X.shape
    T = cfg.slot_len
    beta = cfg.link_rate
    w = cfg.weights
    c = cfg.snr_coeff(h)
    lw = w * cfg.local_eta * np.cbrt(h)
    S = (lw * ~X).sum(axis=1)
    Sp = S * LN2 / beta
    wc = w * c
    n_off = X.sum(axis=1)

    w_u, inv = np.unique(w, return_inverse=True)

    def z_of(u, rows):
        y = np.exp(u)[:, None] / w_u[None, :]
        return g_inverse(y)[:, inv]

    mixed = (n_off > 0) & (S > 0)
    pure = (n_off > 0) & (S == 0)
    Xf = X.astype(float)

    def fun_mixed(u, rows):
        # phi(u) = ln T - ln a(u) - ln(1 + C(u)), increasing in u
        t = np.exp(u)
        z = z_of(u, rows)
        m = Xf[rows]
        C = (m * c / z).sum(axis=1)
        A = (m * wc / (1.0 + z)).sum(axis=1)
        r = t - A
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.log(T) - 1.5 * np.log(Sp[rows] / 3.0) + 1.5 * np.log(r) - np.log1p(C)
            y = t[:, None] / w[None, :]
            dC = (m * c * y * ((1.0 + z) / z) ** 2 / z).sum(axis=1)
            der = 1.5 * t * (1.0 + C) / r + dC / (1.0 + C)
        val = np.where(r > 0, val, -np.inf)
        return val, der

    def fun_pure(u, rows):
        # psi(u) = ln t - ln A(u), increasing in u
        t = np.exp(u)
        z = z_of(u, rows)
        m = Xf[rows]
        C = (m * c / z).sum(axis=1)
        A = (m * wc / (1.0 + z)).sum(axis=1)
        with np.errstate(divide="ignore"):
            val = u - np.log(A)
        der = 1.0 + t * C / A
        return val, der

    wc_off = (Xf * wc).sum(axis=1)
    with np.errstate(divide="ignore"):
        u0 = np.log(np.maximum(wc_off + Sp / (3.0 * T ** (2 / 3)), 1e-300))
    u0 = np.clip(u0, _U_LO + 1, _U_HI - 1)
    utol = tol.dual_tol
    u = _newton_log(fun_mixed, u0, mixed, utol, tol.max_iters)
    u = np.where(pure, _newton_log(fun_pure, u0, pure, utol, tol.max_iters), u)

    a = np.full(M, float(T))
    tau = np.zeros((M, N))
    solved = np.flatnonzero(mixed | pure)
    if solved.size:
        us = u[solved]
        t = np.exp(us)
        z = z_of(us, solved)
        m = Xf[solved]
        C = (m * c / z).sum(axis=1)
        A = (m * wc / (1.0 + z)).sum(axis=1)
        r = t - A
        with np.errstate(divide="ignore", invalid="ignore"):
            a_mix = (Sp[solved] / (3.0 * r)) ** 1.5
        a_s = np.where(pure[solved], T / (1.0 + C), np.minimum(a_mix, T))
        a_s = np.where(np.isfinite(a_s), a_s, T)
        tau_s = m * c * a_s[:, None] / z
        total = a_s + tau_s.sum(axis=1)
        scale = T / total
        a[solved] = np.minimum(a_s * scale, T)
        tau[solved] = tau_s * scale[:, None]
        # rescaled shares can exceed T by an ulp; trim the largest share
        over = a[solved] + tau[solved].sum(axis=1) - T
        for k in np.flatnonzero(over > 0):
            row = solved[k]
            j = int(np.argmax(tau[row]))
            tau[row, j] = max(tau[row, j] - over[k], 0.0)

    score = wpt_scores(cfg, h, X, a, tau)
    return a, tau, score


def wpt_scores(cfg: SystemConfig, h, X, a, tau) -> np.ndarray:
    """Vectorized utility for a batch of wireless-powered allocations."""
    X = np.asarray(X, dtype=bool)
    a = np.asarray(a, dtype=float)
    w = cfg.weights
    local = (w * cfg.local_eta * np.cbrt(h))[None, :] * np.cbrt(a)[:, None] * ~X
    c = cfg.snr_coeff(h)
    off = offload_term(w[None, :] * cfg.link_rate, tau, c[None, :] * a[:, None])
    return local.sum(axis=1) + off.sum(axis=1)


def _wpt_action(x, a, tau) -> OffloadAction:
    return OffloadAction(x=np.asarray(x, dtype=np.int8), wpt_frac=float(a), time_shares=tau)


def _recheck(cfg, obs, action, score, mode):
    """Feasibility and score re-validation through the model module."""
    check_feasible(cfg, action, mode)
    if mode == "wpt":
        ref = utility_wpt(cfg, obs.gains, action, check=False)
    else:
        ref = lyapunov_score(cfg, obs, action, check=False)[0]
    if abs(ref - score) > 1e-9 * max(1.0, abs(ref)):
        raise InvariantError(f"critic score {score!r} disagrees with model score {ref!r}")
    return ref


def solve_wpt(cfg: SystemConfig, h, x, tol: SolverTolerances = DEFAULT_TOL) -> ScoredAction:
    start = time.perf_counter()
    a, tau, score = solve_wpt_batch(cfg, h, np.asarray(x)[None, :], tol)
    elapsed = (time.perf_counter() - start) * 1e6
    action = _wpt_action(x, a[0], tau[0])
    ref = _recheck(cfg, SlotObservation.from_gains(h), action, float(score[0]), "wpt")
    return ScoredAction(action, ref, elapsed)


def _golden_max(f, lo, hi, tol, max_iters):
    inv_phi = (math.sqrt(5) - 1) / 2
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iters):
        if hi - lo <= tol:
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = f(x1)
    cands = [(f(lo), lo), (f1, x1), (f2, x2), (f(hi), hi)]
    return max(cands)[1]


def wpt_inner_allocation(cfg: SystemConfig, h, x, a: float, tol: SolverTolerances = DEFAULT_TOL,
                         trace: list | None = None) -> np.ndarray:
    """Split the residual slot T - a across offloaders by dual bisection.

    At price nu each offloader runs at z_i = g^-1(nu ln2 / (w_i B/v_u)) and
    takes tau_i = c_i a / z_i; the total share is decreasing in nu.
    """
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=bool)
    T = cfg.slot_len
    tau = np.zeros(cfg.n_devices)
    budget = T - a
    if not x.any() or a <= 0 or budget <= 0:
        return tau
    c = cfg.snr_coeff(h)[x]
    wb = cfg.weights[x] * cfg.link_rate

    def shares(nu):
        z = g_inverse_bisect(nu * LN2 / wb, tol.inner_tol)
        return c * a / z

    lo, hi = 1e-30, 1.0
    while shares(hi).sum() > budget:
        hi *= 10.0
    for _ in range(tol.max_iters):
        mid = math.sqrt(lo * hi)
        s = shares(mid).sum()
        if trace is not None:
            trace.append((mid, s))
        if s > budget:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 <= tol.dual_tol:
            break
    tau_x = shares(math.sqrt(lo * hi))
    tau_x *= budget / tau_x.sum()
    tau[x] = tau_x
    return tau


def solve_wpt_nested(cfg: SystemConfig, h, x, tol: SolverTolerances = DEFAULT_TOL) -> ScoredAction:
    """Reference solver: golden-section on a over an inner dual bisection."""
    start = time.perf_counter()
    h, X = _validate_inputs(cfg, h, np.asarray(x)[None, :])
    x = X[0]
    T = cfg.slot_len
    if not x.any():
        a = T
        tau = np.zeros(cfg.n_devices)
    else:
        def value(a):
            tau = wpt_inner_allocation(cfg, h, x, a, tol)
            return utility_wpt(cfg, h, _wpt_action(x, a, tau), check=False)

        a = _golden_max(value, 0.0, T, tol.outer_tol, tol.max_iters)
        tau = wpt_inner_allocation(cfg, h, x, a, tol)
    action = _wpt_action(x, a, tau)
    score = utility_wpt(cfg, h, action)
    return ScoredAction(action, score, (time.perf_counter() - start) * 1e6)


# ---------------------------------------------------------------------------
# drift-plus-penalty subproblem


def _lyapunov_device_params(cfg: SystemConfig, obs: SlotObservation):
    """Per-device optimal frequency / power and per-unit-time offload value."""
    T = cfg.slot_len
    ub, ue = cfg.bit_unit, cfg.energy_unit
    Q = obs.queues.data_q
    Yt = obs.queues.energy_q / ue
    qw = Q / ub + cfg.lyapunov_v * cfg.weights
    beta = cfg.link_rate
    h = obs.gains

    with np.errstate(divide="ignore", invalid="ignore"):
        f_opt = np.sqrt(qw * ue / (3.0 * cfg.cycles_per_bit * cfg.cap_coeff * Yt * ub))
        p_opt = qw * beta * ue / (ub * Yt * LN2) - cfg.noise_power / h
    f_opt = np.where(Yt > 0, f_opt, cfg.f_max)
    f = np.minimum(np.minimum(f_opt, cfg.f_max), cfg.cycles_per_bit * Q / T)
    p = np.where(Yt > 0, np.clip(p_opt, 0.0, cfg.p_max), cfg.p_max)
    rho = beta * np.log1p(p * h / cfg.noise_power) / LN2
    value = qw / ub * rho - Yt * p / ue
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(rho > 0, Q / rho, 0.0)
    return f, p, rho, value, need


def _knapsack_shares(T, mask, value, need, order):
    """Fractional knapsack of slot time for each row of mask (sorted by value)."""
    elig = mask[:, order] & (value[order] > 0)[None, :] & (need[order] > 0)[None, :]
    cap = np.where(elig, need[order][None, :], 0.0)
    before = np.cumsum(cap, axis=1) - cap
    tau_sorted = np.clip(T - before, 0.0, cap)
    tau = np.zeros_like(tau_sorted)
    tau[:, order] = tau_sorted
    return tau


def solve_lyapunov_closed_batch(cfg: SystemConfig, obs: SlotObservation, X):
    """Closed-form allocations: per-device p* and f*, then a value-sorted knapsack.

    Reference path. It fixes each offloader's power at the per-unit-time
    optimum, which is suboptimal when an offloader's queue runs dry before
    the slot ends. Returns (f, p, tau, score).
    """
    _, X = _validate_inputs(cfg, obs.gains, X)
    f_d, p_d, rho, value, need = _lyapunov_device_params(cfg, obs)
    order = np.lexsort((np.arange(cfg.n_devices), -value))
    tau = _knapsack_shares(cfg.slot_len, X, value, need, order)
    f = np.where(X, 0.0, f_d[None, :])
    p = np.where(tau > 0, p_d[None, :], 0.0)
    score = lyapunov_batch_scores(cfg, obs, X, f, p, tau)
    return f, p, tau, score


# phi(s) = (s - 1) e^s + 1 is the tangent condition for the cheapest rate
# r = s B / (v_u ln2) once slot time carries a price

def _phi(s):
    s = np.asarray(s, dtype=float)
    small = s < 1e-3
    big = s * np.exp(np.minimum(s, 700.0)) - np.expm1(np.minimum(s, 700.0))
    return np.where(small, s * s * (0.5 + s / 3.0 + s * s / 8.0), big)


_PHI_S = np.geomspace(1e-7, 60.0, 4001)
_PHI_LOG = np.log(_phi(_PHI_S))


def _phi_inverse(m, newton_steps: int = 1):
    m = np.asarray(m, dtype=float)
    lm = np.log(np.maximum(m, 1e-300))
    s = np.interp(lm, _PHI_LOG, _PHI_S)
    s = np.where(lm < _PHI_LOG[0], np.sqrt(2.0 * np.maximum(m, 0.0)), s)
    s = np.where(lm > _PHI_LOG[-1], _PHI_S[-1], s)
    for _ in range(newton_steps):
        mid = (s > 1e-6) & (s < _PHI_S[-1])
        step = (_phi(s) - m) / (s * np.exp(np.minimum(s, 700.0)))
        s = np.where(mid, np.maximum(s - step, 0.5 * s), s)
    return s


def solve_lyapunov_batch(cfg: SystemConfig, obs: SlotObservation, X, tol: SolverTolerances = DEFAULT_TOL):
    """Exact drift-plus-penalty allocation for each row of X.

    Local devices use the closed-form frequency. Offloaders share the slot
    through one price mu on time. At price mu a device transmits at the rate
    that minimizes (energy cost + mu * airtime) per bit and drains its queue;
    it stays in while its per-unit-time value at that rate exceeds mu. The
    dropout prices d_i are known up front, so each row locates the interval
    of mu holding the optimum and either solves the time budget inside it
    (Newton in log mu) or lands on a dropout price, where that device takes
    the leftover time. Returns (f, p, tau, score).
    """
    h, X = _validate_inputs(cfg, obs.gains, X)
    M, N = X.shape
    T = cfg.slot_len
    beta = cfg.link_rate
    ub, ue = cfg.bit_unit, cfg.energy_unit
    Q = obs.queues.data_q
    A = (Q / ub + cfg.lyapunov_v * cfg.weights) / ub  # score per bit
    C = obs.queues.energy_q / ue / ue  # score cost per joule
    free = C <= 0
    nh = cfg.noise_power / h
    K = C * nh
    s_max = np.log1p(cfg.p_max / nh)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_u = np.where(free, np.inf, np.log(A * beta / (K * LN2)))
        s_cap = np.clip(np.minimum(s_u, s_max), 0.0, None)
        d = A * beta * s_cap / LN2 - C * nh * np.expm1(s_cap)  # dropout price
        need_cap = np.where(s_cap > 0, Q * LN2 / (beta * s_cap), np.inf)
    usable = (Q > 0) & (d > 0) & (s_cap > 0)
    d = np.where(usable, d, 0.0)
    off = X & usable[None, :]
    rank = np.empty(N, dtype=int)
    rank[np.lexsort((np.arange(N), -d))] = np.arange(N)

    def rates(mu):  # mu broadcastable against devices
        with np.errstate(divide="ignore", invalid="ignore"):
            s = _phi_inverse(np.where(free, 0.0, mu / np.where(free, 1.0, K)))
        return np.where(free, s_cap, np.minimum(s, s_cap))

    def times(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(Q > 0, Q * LN2 / (beta * s), 0.0)

    # time each device uses at every other device's dropout price
    earlier = rank[:, None] < rank[None, :]
    at_drop = np.where(earlier & usable[:, None] & usable[None, :], times(rates(d[:, None])).T, 0.0)
    B = off.astype(float) @ at_drop  # (M, N): time used by higher-priced offloaders at d_j
    E = B + np.where(usable, need_cap, 0.0)[None, :]
    hit = off & (E >= T)
    j_star = np.where(hit.any(axis=1), np.argmin(np.where(hit, rank[None, :], N), axis=1), -1)
    has_j = j_star >= 0
    jj = np.maximum(j_star, 0)
    d_j = np.where(has_j, d[jj], 0.0)
    B_j = np.where(has_j, B[np.arange(M), jj], 0.0)
    live = off & (~has_j[:, None] | (rank[None, :] < rank[jj][:, None]))
    on_drop = has_j & (B_j < T)
    interior = live.any(axis=1) & ~on_drop

    d_prev = np.where(live, d[None, :], np.inf).min(axis=1)
    with np.errstate(divide="ignore"):
        u_hi = np.log(np.where(np.isfinite(d_prev), d_prev, 1.0))
        u_lo = np.where(has_j, np.log(np.maximum(d_j, 1e-300)), u_hi - 80.0)
    # time never binds if even the near-zero price leaves slack
    s_bot = rates(np.exp(u_lo)[:, None])
    slack = interior & ((live * np.where(live, times(s_bot), 0.0)).sum(axis=1) <= T)
    solve_rows = interior & ~slack
    Lf = live.astype(float)

    def fun(u, rows):
        s = rates(np.exp(u)[:, None])
        m = Lf[rows]
        tau = np.where(m > 0, times(s), 0.0)
        S = tau.sum(axis=1)
        uncapped = (s < s_cap[None, :]) & ~free[None, :] & (s > 0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ds = np.where(uncapped, _phi(s) / (s * np.exp(s)), 0.0)
            dS = (np.where(m > 0, tau / s * ds, 0.0)).sum(axis=1)
            return np.log(T) - np.log(S), dS / S

    u = 0.5 * (u_lo + u_hi)
    u = _newton_log(fun, u, solve_rows, tol.dual_tol, tol.max_iters, u_lo, u_hi)
    u = np.where(on_drop, np.log(np.maximum(d_j, 1e-300)), np.where(slack, u_lo, u))
    s = rates(np.exp(u)[:, None])
    tau = np.where(live, times(s), 0.0)
    # the device dropping out at the optimal price fills the leftover time
    rows = np.flatnonzero(on_drop)
    tau[rows, j_star[rows]] = T - B_j[rows]
    s[rows, j_star[rows]] = s_cap[j_star[rows]]
    total = tau.sum(axis=1)
    tau = tau * np.where(total > T, T / np.maximum(total, 1e-300), 1.0)[:, None]
    p = np.where(tau > 0, np.minimum(nh[None, :] * np.expm1(s), cfg.p_max), 0.0)
    f = np.where(X, 0.0, _lyapunov_device_params(cfg, obs)[0][None, :])
    score = lyapunov_batch_scores(cfg, obs, X, f, p, tau)
    return f, p, tau, score


def lyapunov_batch_scores(cfg: SystemConfig, obs: SlotObservation, X, f, p, tau) -> np.ndarray:
    T = cfg.slot_len
    ub, ue = cfg.bit_unit, cfg.energy_unit
    Q = obs.queues.data_q
    rho = cfg.link_rate * np.log1p(p * obs.gains / cfg.noise_power) / LN2
    bits = np.where(X, tau * rho, f * T / cfg.cycles_per_bit)
    energy = np.where(X, p * tau, cfg.cap_coeff * f**3 * T)
    served = np.minimum(bits, Q)
    qw = Q / ub + cfg.lyapunov_v * cfg.weights
    return (served / ub) @ qw - (energy / ue) @ (obs.queues.energy_q / ue)


def _lyapunov_action(x, f, p, tau) -> OffloadAction:
    return OffloadAction(x=np.asarray(x, dtype=np.int8), time_shares=tau, cpu_freq=f, tx_power=p)


def solve_lyapunov(cfg: SystemConfig, obs: SlotObservation, x,
                   tol: SolverTolerances = DEFAULT_TOL) -> ScoredAction:
    start = time.perf_counter()
    f, p, tau, score = solve_lyapunov_batch(cfg, obs, np.asarray(x)[None, :], tol)
    elapsed = (time.perf_counter() - start) * 1e6
    action = _lyapunov_action(x, f[0], p[0], tau[0])
    ref = _recheck(cfg, obs, action, float(score[0]), "lyapunov")
    return ScoredAction(action, ref, elapsed)


# ---------------------------------------------------------------------------
# selection among candidates


def solve_batch(cfg: SystemConfig, obs: SlotObservation, X, mode: str,
                tol: SolverTolerances = DEFAULT_TOL) -> np.ndarray:
    """Scores only, for each row of X."""
    if mode == "wpt":
        return solve_wpt_batch(cfg, obs.gains, X, tol)[2]
    if mode == "lyapunov":
        return solve_lyapunov_batch(cfg, obs, X, tol)[3]
    raise ValueError(f"unknown mode {mode!r}")


def solve(cfg: SystemConfig, obs: SlotObservation, x, mode: str,
          tol: SolverTolerances = DEFAULT_TOL) -> ScoredAction:
    if mode == "wpt":
        return solve_wpt(cfg, obs.gains, x, tol)
    if mode == "lyapunov":
        return solve_lyapunov(cfg, obs, x, tol)
    raise ValueError(f"unknown mode {mode!r}")


def first_argmax(scores) -> int:
    """Index of the maximum score; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=float)
    return int(np.flatnonzero(scores == scores.max())[0])


def best_action(cfg: SystemConfig, obs: SlotObservation, candidates, mode: str,
                tol: SolverTolerances = DEFAULT_TOL, vectorized: bool = True):
    """Score every candidate and return (best ScoredAction, its index).

    ``vectorized=False`` issues one solver call per candidate; both paths give
    identical scores.
    """
    X = np.atleast_2d(np.asarray(candidates))
    if X.size == 0 or X.shape[0] == 0:
        raise ValueError("best_action needs at least one candidate")
    start = time.perf_counter()
    if vectorized:
        scores = solve_batch(cfg, obs, X, mode, tol)
    else:
        scores = np.array([solve_batch(cfg, obs, row[None, :], mode, tol)[0] for row in X])
    k = first_argmax(scores)
    best = solve(cfg, obs, X[k], mode, tol)
    if best.score != scores[k] and abs(best.score - scores[k]) > 1e-9 * max(1.0, abs(best.score)):
        raise InvariantError("best_action: batch and single-candidate scores disagree")
    best.solve_time = (time.perf_counter() - start) * 1e6
    return best, k


# ---------------------------------------------------------------------------
# brute-force oracle (verification only)

MAX_ORACLE_OFFLOADERS = 3


def _simplex_lattice(n_vars: int, steps: int) -> np.ndarray:
    """All nonnegative integer vectors of length n_vars summing to steps."""
    if n_vars == 1:
        return np.array([[steps]])
    grids = np.meshgrid(*[np.arange(steps + 1)] * (n_vars - 1), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    pts = pts[pts.sum(axis=1) <= steps]
    return np.column_stack([pts, steps - pts.sum(axis=1)])


def _oracle_wpt(cfg, h, x, resolution):
    T = cfg.slot_len
    x = x.astype(bool)
    off = np.flatnonzero(x)
    m = off.size
    w = cfg.weights
    eta_local = (w * cfg.local_eta * np.cbrt(h))[~x].sum()
    c = cfg.snr_coeff(h)[off]
    rate = w[off] * cfg.link_rate

    def value(pts):  # pts: (P, m+1) columns a, tau_1..tau_m, in slot units
        a = pts[:, 0]
        val = eta_local * np.cbrt(a)
        if m:
            val = val + offload_term(rate[None, :], pts[:, 1:], c[None, :] * a[:, None]).sum(axis=1)
        return val

    steps = int(round(1.0 / resolution))
    pts = _simplex_lattice(m + 1, steps) * (T / steps)
    vals = value(pts)
    best = pts[int(np.argmax(vals))]
    # one refinement pass: step/10 over a +-1 coarse-step box, last share absorbs the rest
    fine = T / steps / 10.0
    offs = np.arange(-10, 11) * fine
    grids = np.meshgrid(*[offs] * m, indexing="ij") if m else []
    local_pts = np.stack([g.ravel() for g in grids], axis=1) if m else np.zeros((1, 0))
    cand = best[None, :m] + local_pts
    cand = np.column_stack([cand, T - cand.sum(axis=1)])
    cand = cand[np.all(cand >= 0, axis=1)]
    if m == 0:
        cand = np.array([[T]])
    cv = value(cand)
    if cv.max() > vals.max():
        best = cand[int(np.argmax(cv))]
    tau = np.zeros(cfg.n_devices)
    tau[off] = best[1:]
    return _wpt_action(x, best[0], tau)


def _oracle_lyapunov(cfg, obs, x, resolution):
    T = cfg.slot_len
    ub, ue = cfg.bit_unit, cfg.energy_unit
    x = x.astype(bool)
    n = cfg.n_devices
    Q = obs.queues.data_q
    Yt = obs.queues.energy_q / ue
    qw = Q / ub + cfg.lyapunov_v * cfg.weights
    steps = int(round(1.0 / resolution))
    f = np.zeros(n)
    p = np.zeros(n)
    tau = np.zeros(n)

    def local_value(i, fr):
        bits = np.minimum(fr * T / cfg.cycles_per_bit, Q[i])
        return qw[i] * bits / ub - Yt[i] * cfg.cap_coeff * fr**3 * T / ue

    for i in np.flatnonzero(~x):
        grid = np.linspace(0.0, cfg.f_max, steps + 1)
        best = grid[int(np.argmax(local_value(i, grid)))]
        fine = np.clip(best + np.arange(-10, 11) * cfg.f_max / steps / 10, 0.0, cfg.f_max)
        fv = local_value(i, fine)
        f[i] = fine[int(np.argmax(fv))] if fv.max() > local_value(i, np.array([best]))[0] else best

    off = np.flatnonzero(x)
    if off.size:
        def table(i, taus, powers):
            rho = cfg.link_rate * np.log1p(powers * obs.gains[i] / cfg.noise_power) / LN2
            bits = np.minimum(taus[:, None] * rho[None, :], Q[i])
            val = qw[i] * bits / ub - Yt[i] * powers[None, :] * taus[:, None] / ue
            k = np.argmax(val, axis=1)
            return val[np.arange(taus.size), k], powers[k]

        def combine(tau_sets, pgrids):
            # tau_sets[j]: candidate shares of offloader j; joint choice with sum <= T
            tabs = [table(i, ts, pg) for i, ts, pg in zip(off, tau_sets, pgrids)]
            mesh = np.meshgrid(*[np.arange(ts.size) for ts in tau_sets], indexing="ij")
            idx = [g.ravel() for g in mesh]
            total_t = sum(ts[k] for ts, k in zip(tau_sets, idx))
            total_v = sum(tb[0][k] for tb, k in zip(tabs, idx))
            total_v = np.where(total_t <= T * (1 + 1e-12), total_v, -np.inf)
            j = int(np.argmax(total_v))
            return (total_v[j], [ts[k[j]] for ts, k in zip(tau_sets, idx)],
                    [tb[1][k[j]] for tb, k in zip(tabs, idx)])

        coarse_tau = np.linspace(0.0, T, steps + 1)
        coarse_p = np.linspace(0.0, cfg.p_max, steps + 1)
        v0, taus, pows = combine([coarse_tau] * off.size, [coarse_p] * off.size)
        fine_off = np.arange(-10, 11) / 10.0 / steps
        fine_taus = [np.clip(t0 + fine_off * T, 0.0, T) for t0 in taus]
        fine_ps = [np.clip(p0 + fine_off * cfg.p_max, 0.0, cfg.p_max) for p0 in pows]
        v1, taus1, pows1 = combine(fine_taus, fine_ps)
        if v1 > v0:
            taus, pows = taus1, pows1
        for i, t_i, p_i in zip(off, taus, pows):
            if t_i > 0 and p_i > 0:
                tau[i], p[i] = t_i, p_i
    return _lyapunov_action(x, f, p, tau)


def oracle_grid(cfg: SystemConfig, obs, x, resolution: float = 0.01, mode: str = "wpt"):
    """Exhaustive grid search over the continuous variables plus one refinement.

    ``obs`` may be a gains vector (wpt mode). Returns (action, score).
    """
    if not isinstance(obs, SlotObservation):
        obs = SlotObservation.from_gains(obs)
    x = np.asarray(x)
    if x.shape != (cfg.n_devices,):
        raise ValueError(f"x: expected length {cfg.n_devices}, got {x.size}")
    if int(x.sum()) > MAX_ORACLE_OFFLOADERS:
        raise ValueError(f"oracle_grid: at most {MAX_ORACLE_OFFLOADERS} offloaders (got {int(x.sum())})")
    if mode == "wpt":
        action = _oracle_wpt(cfg, obs.gains, x, resolution)
        return action, utility_wpt(cfg, obs.gains, action)
    if mode == "lyapunov":
        action = _oracle_lyapunov(cfg, obs, x, resolution)
        return action, lyapunov_score(cfg, obs, action)[0]
    raise ValueError(f"unknown mode {mode!r}")


__all__ = [
    "DEFAULT_TOL",
    "FeasibilityError",
    "ScoredAction",
    "SolverTolerances",
    "best_action",
    "first_argmax",
    "g_fn",
    "g_inverse",
    "g_inverse_bisect",
    "oracle_grid",
    "solve",
    "solve_batch",
    "solve_lyapunov",
    "solve_lyapunov_batch",
    "solve_wpt",
    "solve_wpt_batch",
    "solve_wpt_nested",
    "wpt_inner_allocation",
    "wpt_scores",
]

"""Physical model of a single-server MEC cell.

Two scenarios share one configuration:

* ``wpt`` -- wireless-powered devices. The edge server broadcasts energy for a
  fraction ``a`` of the slot; a local device computes with what it harvested,
  an offloading device spends its harvest transmitting in its own TDMA share.
* ``lyapunov`` -- battery devices with data queues. Local devices pick a CPU
  frequency, offloaders pick a transmit power and a TDMA share, and a virtual
  energy queue per device enforces the long-run average power budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

LN2 = math.log(2.0)
FEAS_SLACK = 1e-9


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class FeasibilityError(ValueError):
    """An action violates a per-slot constraint."""


class InvariantError(RuntimeError):
    """A model contract was breached (usually a solver bug)."""


def default_weights(n: int) -> np.ndarray:
    # device i (1-based) gets 1.0 when i is odd, 1.5 otherwise
    return np.where(np.arange(n) % 2 == 0, 1.0, 1.5)


def default_mean_gain(n: int, lo: float = 1e-6, hi: float = 1e-5) -> np.ndarray:
    if n == 1:
        return np.array([math.sqrt(lo * hi)])
    return np.geomspace(hi, lo, n)


_VECTOR_FIELDS = ("weights", "mean_gain", "power_budget")


@dataclass
class SystemConfig:
    n_devices: int = 10
    es_tx_power: float = 3.0
    harvest_eff: float = 0.51
    bandwidth: float = 2e6
    noise_power: float = 1e-10
    comm_overhead: float = 1.1
    cycles_per_bit: float = 100.0
    cap_coeff: float = 1e-26
    f_max: float = 3e8
    p_max: float = 0.1
    slot_len: float = 1.0
    weights: np.ndarray | None = None
    mean_gain: np.ndarray | None = None
    arrival_rate: float = 0.0
    power_budget: np.ndarray | float | None = None
    lyapunov_v: float = 20.0
    # queue/energy units used inside the drift-plus-penalty score
    bit_unit: float = 1e6
    energy_unit: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        n = int(self.n_devices)
        if n < 1:
            raise ConfigError(f"n_devices must be a positive integer, got {self.n_devices}")
        self.n_devices = n
        if self.weights is None:
            self.weights = default_weights(n)
        if self.mean_gain is None:
            self.mean_gain = default_mean_gain(n)
        if self.power_budget is None:
            self.power_budget = 0.08
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.mean_gain = np.asarray(self.mean_gain, dtype=float).reshape(-1)
        pb = np.asarray(self.power_budget, dtype=float).reshape(-1)
        self.power_budget = np.full(n, pb[0]) if pb.size == 1 else pb
        self.validate()

    def validate(self) -> None:
        n = self.n_devices
        for name in _VECTOR_FIELDS:
            v = getattr(self, name)
            if v.shape != (n,):
                raise ConfigError(f"{name} must have length {n}, got {v.shape[0]}")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ConfigError(f"{name} must be strictly positive")
        for f in fields(self):
            if f.name in _VECTOR_FIELDS or f.name in ("n_devices", "rng_seed"):
                continue
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ConfigError(f"{f.name} must be finite")
            if f.name == "arrival_rate":
                if v < 0:
                    raise ConfigError("arrival_rate must be >= 0")
            elif v <= 0:
                raise ConfigError(f"{f.name} must be strictly positive")
        if not 0 < self.harvest_eff <= 1:
            raise ConfigError("harvest_eff must lie in (0, 1]")
        if self.comm_overhead < 1:
            raise ConfigError("comm_overhead must be >= 1")

    # derived constants -------------------------------------------------
    @property
    def link_rate(self) -> float:
        """Bits per second per unit spectral efficiency, B / v_u."""
        return self.bandwidth / self.comm_overhead

    @property
    def local_eta(self) -> float:
        return (self.harvest_eff * self.es_tx_power / self.cap_coeff) ** (1 / 3) / self.cycles_per_bit

    def snr_coeff(self, h: np.ndarray) -> np.ndarray:
        """c_i = mu P h_i^2 / N0, the offload SNR per unit of (a / tau)."""
        return self.harvest_eff * self.es_tx_power * np.asarray(h) ** 2 / self.noise_power

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass
class QueueState:
    data_q: np.ndarray
    energy_q: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "QueueState":
        return cls(np.zeros(n), np.zeros(n))

    def copy(self) -> "QueueState":
        return QueueState(self.data_q.copy(), self.energy_q.copy())


@dataclass
class SlotObservation:
    t: int
    gains: np.ndarray
    arrivals: np.ndarray
    queues: QueueState

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        self.arrivals = np.asarray(self.arrivals, dtype=float)
        if np.any(~np.isfinite(self.gains)) or np.any(self.gains <= 0):
            raise ValueError("channel gains must be finite and > 0")
        if np.any(self.arrivals < 0):
            raise ValueError("arrivals must be >= 0")

    @classmethod
    def from_gains(cls, h, t: int = 0) -> "SlotObservation":
        h = np.asarray(h, dtype=float)
        return cls(t, h, np.zeros_like(h), QueueState.zeros(h.size))


@dataclass
class OffloadAction:
    x: np.ndarray
    wpt_frac: float = 0.0
    time_shares: np.ndarray | None = None
    cpu_freq: np.ndarray | None = None
    tx_power: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int8)
        n = self.x.size
        for name in ("time_shares", "cpu_freq", "tx_power"):
            v = getattr(self, name)
            setattr(self, name, np.zeros(n) if v is None else np.asarray(v, dtype=float))


@dataclass
class SlotOutcome:
    processed_bits: np.ndarray
    energy_used: np.ndarray
    utility: float


# ---------------------------------------------------------------------------
# random inputs


def gen_channels(cfg: SystemConfig, rng) -> np.ndarray:
    """Rayleigh power fading around each device's mean gain."""
    return cfg.mean_gain * rng.exponential(1.0, cfg.n_devices)


def gen_arrivals(cfg: SystemConfig, rng) -> np.ndarray:
    if cfg.arrival_rate == 0:
        return np.zeros(cfg.n_devices)
    return rng.exponential(cfg.arrival_rate, cfg.n_devices)


# ---------------------------------------------------------------------------
# feasibility and scores


def check_feasible(cfg: SystemConfig, action: OffloadAction, mode: str) -> None:
    """Raise FeasibilityError naming the first violated constraint."""
    x = action.x
    n = cfg.n_devices
    T = cfg.slot_len
    if x.shape != (n,):
        raise FeasibilityError(f"x: expected length {n}, got {x.size}")
    if np.any((x != 0) & (x != 1)):
        raise FeasibilityError("x: entries must be 0 or 1")
    tau = action.time_shares
    if np.any(~np.isfinite(tau)) or np.any(tau < 0):
        raise FeasibilityError("time_shares: must be finite and >= 0")
    if np.any(tau[x == 0] != 0):
        raise FeasibilityError("time_shares: nonzero share for a local device")
    if mode == "wpt":
        a = action.wpt_frac
        if not (math.isfinite(a) and 0 <= a <= T + FEAS_SLACK):
            raise FeasibilityError(f"wpt_frac: {a} outside [0, {T}]")
        if a + tau.sum() > T + FEAS_SLACK:
            raise FeasibilityError(f"slot: wpt_frac + sum(time_shares) = {a + tau.sum()} > {T}")
        return
    if tau.sum() > T + FEAS_SLACK:
        raise FeasibilityError(f"slot: sum(time_shares) = {tau.sum()} > {T}")
    f, p = action.cpu_freq, action.tx_power
    if np.any(~np.isfinite(f)) or np.any(f < 0) or np.any(f > cfg.f_max * (1 + 1e-12)):
        raise FeasibilityError("cpu_freq: outside [0, f_max]")
    if np.any(f[x == 1] != 0):
        raise FeasibilityError("cpu_freq: nonzero frequency for an offloading device")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > cfg.p_max * (1 + 1e-12)):
        raise FeasibilityError("tx_power: outside [0, p_max]")
    if np.any(p[x == 0] != 0):
        raise FeasibilityError("tx_power: nonzero power for a local device")


def offload_term(rate: float | np.ndarray, tau, snr_gain) -> np.ndarray:
    """rate * tau * log2(1 + snr_gain / tau), defined as 0 at tau = 0."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros(np.broadcast(tau, snr_gain).shape)
    pos = np.broadcast_to(tau > 0, out.shape)
    tb = np.broadcast_to(tau, out.shape)
    sb = np.broadcast_to(snr_gain, out.shape)
    rb = np.broadcast_to(rate, out.shape)
    out[pos] = rb[pos] * tb[pos] * np.log1p(sb[pos] / tb[pos]) / LN2
    return out


def utility_wpt(cfg: SystemConfig, h, action: OffloadAction, check: bool = True) -> float:
    """Weighted sum computation rate of the wireless-powered cell."""
    if check:
        check_feasible(cfg, action, "wpt")
    h = np.asarray(h, dtype=float)
    x = action.x.astype(bool)
    a = action.wpt_frac
    w = cfg.weights
    local = w[~x] * cfg.local_eta * np.cbrt(h[~x] * a)
    c = cfg.snr_coeff(h)
    off = offload_term(w[x] * cfg.link_rate, action.time_shares[x], c[x] * a)
    return float(local.sum() + off.sum())


def execute(cfg: SystemConfig, obs: SlotObservation, action: OffloadAction) -> SlotOutcome:
    """Bits served and energy spent by each device under a stochastic-scenario action."""
    T = cfg.slot_len
    x = action.x.astype(bool)
    f, p, tau = action.cpu_freq, action.tx_power, action.time_shares
    rho = cfg.link_rate * np.log1p(p * obs.gains / cfg.noise_power) / LN2
    bits = np.where(x, tau * rho, f * T / cfg.cycles_per_bit)
    energy = np.where(x, p * tau, cfg.cap_coeff * f**3 * T)
    served = np.minimum(bits, obs.queues.data_q)
    return SlotOutcome(served, energy, float(np.dot(cfg.weights, served)) / T)


def drift_score(cfg: SystemConfig, queues: QueueState, outcome: SlotOutcome) -> float:
    ub, ue = cfg.bit_unit, cfg.energy_unit
    qw = queues.data_q / ub + cfg.lyapunov_v * cfg.weights
    return float(np.dot(qw, outcome.processed_bits / ub) - np.dot(queues.energy_q / ue, outcome.energy_used / ue))


def lyapunov_score(cfg: SystemConfig, obs: SlotObservation, action: OffloadAction,
                   check: bool = True) -> tuple[float, SlotOutcome]:
    """Per-slot drift-plus-penalty surrogate G; larger is better.

    G = sum_i (Q_i/u_b + V w_i) D_i/u_b - sum_i (Y_i/u_e) e_i/u_e, with u_b and
    u_e the configured bit and energy units (both 1 gives the plain SI form).
    """
    if check:
        check_feasible(cfg, action, "lyapunov")
    outcome = execute(cfg, obs, action)
    return drift_score(cfg, obs.queues, outcome), outcome


def step_queues(cfg: SystemConfig, state: QueueState, outcome: SlotOutcome, arrivals) -> QueueState:
    D = outcome.processed_bits
    if np.any(D > state.data_q * (1 + 1e-12) + 1e-12):
        raise InvariantError("processed bits exceed the data queue backlog")
    q = np.maximum(state.data_q - D, 0.0) + np.asarray(arrivals, dtype=float)
    y = np.maximum(state.energy_q + outcome.energy_used - cfg.power_budget * cfg.slot_len, 0.0)
    return QueueState(q, y)

"""Random instance generators and critic-vs-oracle comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critic import MAX_ORACLE_OFFLOADERS, oracle_grid, solve
from .model import QueueState, SlotObservation, SystemConfig, default_mean_gain, gen_channels


def random_config(rng, n: int) -> SystemConfig:
    """Default physics with randomized weights and mean gains."""
    lo = 10 ** rng.uniform(-6.5, -5.5)
    return SystemConfig(n_devices=n, weights=rng.uniform(0.5, 2.0, n),
                        mean_gain=default_mean_gain(n, lo, lo * 10))


def random_decision(rng, n: int, max_offloaders: int = MAX_ORACLE_OFFLOADERS) -> np.ndarray:
    k = int(rng.integers(0, min(n, max_offloaders) + 1))
    x = np.zeros(n, dtype=np.int8)
    x[rng.choice(n, size=k, replace=False)] = 1
    return x


def random_wpt_instance(rng, n: int):
    cfg = random_config(rng, n)
    obs = SlotObservation.from_gains(gen_channels(cfg, rng))
    return cfg, obs, random_decision(rng, n)


def random_lyapunov_instance(rng, n: int):
    cfg = random_config(rng, n)
    h = gen_channels(cfg, rng)
    q = rng.uniform(0.0, 4e6, n) * (rng.random(n) < 0.9)
    y = rng.uniform(0.0, 0.3, n) * (rng.random(n) < 0.8)
    obs = SlotObservation(0, h, np.zeros(n), QueueState(q, y))
    return cfg, obs, random_decision(rng, n, max_offloaders=n)


@dataclass
class OracleComparison:
    solver: float
    oracle: float

    @property
    def rel_gap(self) -> float:
        denom = max(abs(self.oracle), 1e-300)
        return (self.oracle - self.solver) / denom

    @property
    def ratio(self) -> float:
        return self.solver / self.oracle if self.oracle > 0 else 1.0


def compare(cfg, obs, x, mode: str, resolution: float = 0.01) -> OracleComparison:
    s = solve(cfg, obs, x, mode).score
    o = oracle_grid(cfg, obs, x, resolution, mode)[1]
    return OracleComparison(s, o)


def oracle_check(instances: int, n_list, mode: str, seed: int = 0, resolution: float = 0.01):
    """Yields (index, n, comparison) over random instances."""
    rng = np.random.default_rng(seed)
    for i in range(instances):
        n = int(n_list[i % len(n_list)])
        if mode == "wpt":
            cfg, obs, x = random_wpt_instance(rng, n)
        else:
            cfg, obs, x = random_lyapunov_instance(rng, n)
        yield i, n, compare(cfg, obs, x, mode, resolution)

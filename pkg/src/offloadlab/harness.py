"""Experiment driver: slot loops, metrics, benchmarks and CSV output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import actor as act
from .baselines import (
    MAX_ENUM_DEVICES,
    BudgetTracker,
    all_binary,
    all_edge,
    all_local,
    coordinate_descent,
    enumerate_opt,
    myopic,
)
from .critic import DEFAULT_TOL, best_action, solve
from .model import (
    ConfigError,
    InvariantError,
    QueueState,
    SlotObservation,
    SystemConfig,
    drift_score,
    execute,
    gen_arrivals,
    gen_channels,
    step_queues,
)

log = logging.getLogger(__name__)

SCENARIOS = ("droo", "lydroo")
DEFAULT_SLOTS = {"droo": 10000, "lydroo": 20000}
EVENT_KINDS = ("weight_flip",)
POLICIES = {"droo": ("actor",), "lydroo": ("actor", "lycd", "myopic")}
BASELINES = ("lc", "ec", "cd")


@dataclass
class Event:
    slot: int
    kind: str
    payload: dict | None = None


@dataclass
class ExperimentConfig:
    scenario: str = "droo"
    slots: int | None = None
    k_init: int | None = None
    events: list = field(default_factory=list)
    metric_window: int = 200
    output_dir: str | None = None
    seed: int | None = None
    policy: str = "actor"
    ncr_reference: str = "auto"  # auto | enum | cd | none
    baselines: list = field(default_factory=list)
    exhaustive_candidates: bool = False
    convergence_threshold: float = 0.98
    myopic_budget: str = "paced"  # paced | horizon

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.slots is None:
            self.slots = DEFAULT_SLOTS[self.scenario]
        self.events = [e if isinstance(e, Event) else Event(**e) if isinstance(e, dict) else Event(*e)
                       for e in self.events]

    def validate(self, cfg: SystemConfig) -> None:
        if self.slots < 1:
            raise ConfigError("slots must be >= 1")
        if self.metric_window < 1:
            raise ConfigError("metric_window must be >= 1")
        if self.policy not in POLICIES[self.scenario]:
            raise ConfigError(f"policy {self.policy!r} not available for {self.scenario}")
        n = cfg.n_devices
        if self.k_init is not None and not 1 <= self.k_init <= n + 1:
            raise ConfigError(f"k_init must lie in [1, {n + 1}]")
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise ConfigError(f"unsupported event kind {ev.kind!r}")
            if not 0 <= ev.slot < self.slots:
                raise ConfigError(f"event slot {ev.slot} outside the horizon")
        if self.ncr_reference not in ("auto", "enum", "cd", "none"):
            raise ConfigError(f"bad ncr_reference {self.ncr_reference!r}")
        if self.ncr_reference == "enum" and n > MAX_ENUM_DEVICES:
            raise ConfigError(f"enumeration reference needs N <= {MAX_ENUM_DEVICES}")
        for b in self.baselines:
            if b not in BASELINES:
                raise ConfigError(f"unknown baseline {b!r}")
        if self.myopic_budget not in ("paced", "horizon"):
            raise ConfigError(f"bad myopic_budget {self.myopic_budget!r}")
        if self.exhaustive_candidates and n > 12:
            raise ConfigError("exhaustive_candidates is limited to N <= 12")

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["events"] = [vars(e) for e in self.events]
        return out


@dataclass
class SlotRecord:
    t: int
    utility: float
    score: float
    optimal_utility: float = math.nan
    ncr: float = math.nan
    loss: float = math.nan
    k_used: int = 0
    chosen_index: int = 0
    decision_time_us: float = 0.0
    x: np.ndarray | None = None
    processed: np.ndarray | None = None
    data_q: np.ndarray | None = None
    energy_q: np.ndarray | None = None
    energy: np.ndarray | None = None
    baseline: dict = field(default_factory=dict)


@dataclass
class RunSummary:
    slots: int
    converged_at: int | None
    mean_utility: float
    mean_ncr: float
    final_avg_queue: np.ndarray | None
    avg_power: np.ndarray | None
    queue_ratio: float
    mean_decision_us: float
    p95_decision_us: float
    total_utility: float

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass
class RunResult:
    records: list
    summary: RunSummary
    cfg: SystemConfig
    ec: ExperimentConfig
    model: act.ActorModel | None = None
    scaling: act.FeatureScaling | None = None
    k_final: int | None = None


# ---------------------------------------------------------------------------
# metrics


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` finite values (NaNs are skipped)."""
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    cs = np.concatenate([[0.0], np.cumsum(np.where(ok, v, 0.0))])
    cn = np.concatenate([[0], np.cumsum(ok)])
    idx = np.arange(v.size)
    lo = np.maximum(idx + 1 - window, 0)
    cnt = cn[idx + 1] - cn[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, (cs[idx + 1] - cs[lo]) / cnt, np.nan)


def queue_ratio(avg_queue) -> float:
    """Mean backlog over the last quarter divided by the mean over the second quarter."""
    q = np.asarray(avg_queue, dtype=float)
    n = q.size
    second = q[n // 4: n // 2].mean() if n >= 4 else math.nan
    last = q[3 * n // 4:].mean() if n >= 4 else math.nan
    if second == 0 and last == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        return float(last / second) if second > 0 else math.inf


def summarize(records, cfg: SystemConfig, ec: ExperimentConfig) -> RunSummary:
    n_slots = len(records)
    util = np.array([r.utility for r in records], dtype=float)
    ncr = np.array([r.ncr for r in records], dtype=float)
    ma = moving_average(ncr, ec.metric_window)
    conv = None
    reached = np.flatnonzero((ma >= ec.convergence_threshold) & (np.arange(n_slots) >= ec.metric_window - 1))
    if reached.size:
        conv = int(records[reached[0]].t)
    times = np.array([r.decision_time_us for r in records], dtype=float)
    q_final = avg_power = None
    ratio = math.nan
    if records and records[0].data_q is not None:
        Q = np.array([r.data_q for r in records])
        q_final = Q[-ec.metric_window:].mean(axis=0)
        ratio = queue_ratio(Q.mean(axis=1))
    if records and records[0].energy is not None:
        E = np.array([r.energy for r in records])
        avg_power = E.sum(axis=0) / (n_slots * cfg.slot_len)
    return RunSummary(
        slots=n_slots,
        converged_at=conv,
        mean_utility=float(util.mean()) if n_slots else math.nan,
        mean_ncr=float(np.nanmean(ncr)) if np.any(np.isfinite(ncr)) else math.nan,
        final_avg_queue=q_final,
        avg_power=avg_power,
        queue_ratio=ratio,
        mean_decision_us=float(times.mean()) if n_slots else math.nan,
        p95_decision_us=float(np.percentile(times, 95)) if n_slots else math.nan,
        total_utility=float(util.sum()),
    )


# ---------------------------------------------------------------------------
# slot loops


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    names = ("channel", "arrival", "init", "train", "noise")
    return dict(zip(names, (np.random.default_rng(s) for s in ss.spawn(len(names)))))


def _apply_events(cfg: SystemConfig, ec: ExperimentConfig, t: int) -> SystemConfig:
    for ev in ec.events:
        if ev.slot != t:
            continue
        if ev.kind == "weight_flip":
            payload = ev.payload or {}
            if "weights" in payload:
                w = np.asarray(payload["weights"], dtype=float)
            else:
                lo, hi = cfg.weights.min(), cfg.weights.max()
                w = lo + hi - cfg.weights
            cfg = replace(cfg, weights=w)
            log.info("slot %d: weights flipped", t)
    return cfg


def weight_flip_events(*slots) -> list[Event]:
    return [Event(int(s), "weight_flip") for s in slots]


class _ActorPolicy:
    """Decision path (featurize -> forward -> quantize -> critic) plus learning."""

    def __init__(self, cfg, ec, tc, mode, rngs, model=None, scaling=None):
        n = cfg.n_devices
        self.mode = mode
        self.tc = tc
        self.rngs = rngs
        self.model = model or act.ActorModel.for_problem(n, mode, rng=rngs["init"])
        self.scaling = scaling or act.FeatureScaling.for_config(cfg)
        self.memory = act.ReplayMemory(tc.memory_size, self.model.layer_dims[0], n)
        k0 = ec.k_init if ec.k_init is not None else n
        self.sched = act.KSchedule(k0)
        self.exhaustive = ec.exhaustive_candidates
        self.last_loss = math.nan
        self.decisions = 0

    def decide(self, cfg, obs):
        start = time.perf_counter()
        feat = act.featurize(cfg, obs, self.mode, self.scaling)
        xhat = act.forward(self.model, feat)
        if self.exhaustive:
            cands = all_binary(cfg.n_devices)
        else:
            cands = act.quantize(xhat, self.sched.current_k, self.tc.quantizer_kind,
                                 self.rngs["noise"], self.tc.noise_sigma)
        best, idx = best_action(cfg, obs, cands, self.mode)
        elapsed = (time.perf_counter() - start) * 1e6
        return feat, best, idx, len(cands), elapsed

    def learn(self, feat, x, idx):
        act.remember(self.memory, feat, x)
        self.sched.record(idx)
        self.decisions += 1
        if self.decisions % self.tc.train_interval == 0:
            loss = act.train_step(self.model, self.memory, self.tc, self.rngs["train"])
            if loss is not None:
                self.last_loss = loss
        if self.decisions % self.tc.k_adapt_interval == 0 and not self.exhaustive:
            act.adapt_k(self.sched, len(x))


def _ncr_reference(ec, cfg):
    if ec.ncr_reference != "auto":
        return ec.ncr_reference
    return "enum" if cfg.n_devices <= MAX_ENUM_DEVICES else "cd"


def run_droo(ec: ExperimentConfig, cfg: SystemConfig, tc: act.TrainConfig | None = None,
             model: act.ActorModel | None = None, scaling: act.FeatureScaling | None = None,
             progress: bool = False) -> RunResult:
    if ec.scenario != "droo":
        raise ConfigError("run_droo needs scenario 'droo'")
    ec.validate(cfg)
    tc = tc or act.TrainConfig()
    seed = ec.seed if ec.seed is not None else cfg.rng_seed
    rngs = _streams(seed)
    policy = _ActorPolicy(cfg, ec, tc, "wpt", rngs, model, scaling)
    ref = _ncr_reference(ec, cfg)
    records = []
    for t in range(ec.slots):
        cfg = _apply_events(cfg, ec, t)
        h = gen_channels(cfg, rngs["channel"])
        obs = SlotObservation.from_gains(h, t)
        k_used = policy.sched.current_k
        feat, best, idx, n_cand, elapsed = policy.decide(cfg, obs)
        policy.learn(feat, best.action.x, idx)
        rec = SlotRecord(t=t, utility=best.score, score=best.score, loss=policy.last_loss,
                         k_used=n_cand if policy.exhaustive else k_used, chosen_index=idx,
                         decision_time_us=elapsed, x=best.action.x.copy())
        if ref == "enum":
            rec.optimal_utility = enumerate_opt(cfg, obs, "wpt").score
        elif ref == "cd":
            rec.optimal_utility = coordinate_descent(cfg, obs, "wpt").score
        if ref != "none":
            rec.ncr = rec.utility / rec.optimal_utility if rec.optimal_utility > 0 else 1.0
            if ref == "enum" and rec.ncr > 1 + 1e-9:
                raise InvariantError(f"slot {t}: NCR {rec.ncr} exceeds 1")
        for b in ec.baselines:
            rec.baseline[b] = _baseline_score(b, cfg, obs, "wpt")
        records.append(rec)
        if progress and (t + 1) % 1000 == 0:
            log.info("droo slot %d ncr_ma=%.4f k=%d", t + 1,
                     np.nanmean([r.ncr for r in records[-ec.metric_window:]]), policy.sched.current_k)
    summary = summarize(records, cfg, ec)
    return RunResult(records, summary, cfg, ec, policy.model, policy.scaling, policy.sched.current_k)


def _baseline_score(name, cfg, obs, mode):
    if name == "lc":
        return all_local(cfg, obs, mode).score
    if name == "ec":
        return all_edge(cfg, obs, mode).score
    return coordinate_descent(cfg, obs, mode).score


def run_lydroo(ec: ExperimentConfig, cfg: SystemConfig, tc: act.TrainConfig | None = None,
               model: act.ActorModel | None = None, scaling: act.FeatureScaling | None = None,
               progress: bool = False) -> RunResult:
    """Queue-aware loop; ``ec.policy`` picks LyDROO (actor), LyCD or Myopic.

    Every decision uses slot-t information only.
    """
    if ec.scenario != "lydroo":
        raise ConfigError("run_lydroo needs scenario 'lydroo'")
    ec.validate(cfg)
    tc = tc or act.TrainConfig()
    seed = ec.seed if ec.seed is not None else cfg.rng_seed
    rngs = _streams(seed)
    n = cfg.n_devices
    policy = _ActorPolicy(cfg, ec, tc, "lyapunov", rngs, model, scaling) if ec.policy == "actor" else None
    tracker = BudgetTracker.fresh(n, ec.myopic_budget, ec.slots)
    queues = QueueState.zeros(n)
    records = []
    for t in range(ec.slots):
        cfg = _apply_events(cfg, ec, t)
        h = gen_channels(cfg, rngs["channel"])
        arrivals = gen_arrivals(cfg, rngs["arrival"])
        obs = SlotObservation(t, h, arrivals, queues)
        idx, k_used, loss = 0, 1, math.nan
        if ec.policy == "actor":
            k_used = policy.sched.current_k
            feat, best, idx, n_cand, elapsed = policy.decide(cfg, obs)
            action = best.action
        elif ec.policy == "lycd":
            start = time.perf_counter()
            action = coordinate_descent(cfg, obs, "lyapunov").action
            elapsed = (time.perf_counter() - start) * 1e6
        else:
            res = myopic(cfg, obs, tracker)
            action, elapsed = res.action, res.wall_time
        outcome = execute(cfg, obs, action)
        score = drift_score(cfg, queues, outcome)
        if policy is not None:
            policy.learn(feat, action.x, idx)
            loss = policy.last_loss
        queues = step_queues(cfg, queues, outcome, arrivals)
        records.append(SlotRecord(
            t=t, utility=outcome.utility, score=score, loss=loss, k_used=k_used, chosen_index=idx,
            decision_time_us=elapsed, x=action.x.copy(), processed=outcome.processed_bits,
            data_q=queues.data_q.copy(), energy_q=queues.energy_q.copy(), energy=outcome.energy_used,
        ))
        if progress and (t + 1) % 2000 == 0:
            log.info("lydroo[%s] slot %d avg_q=%.4g", ec.policy, t + 1, queues.data_q.mean())
    summary = summarize(records, cfg, ec)
    return RunResult(records, summary, cfg, ec,
                     policy.model if policy else None, policy.scaling if policy else None,
                     policy.sched.current_k if policy else None)


def run(ec: ExperimentConfig, cfg: SystemConfig, tc: act.TrainConfig | None = None, **kw) -> RunResult:
    if ec.scenario == "droo":
        return run_droo(ec, cfg, tc, **kw)
    return run_lydroo(ec, cfg, tc, **kw)


# ---------------------------------------------------------------------------
# capacity


class CapacityError(RuntimeError):
    pass


def estimate_capacity(cfg: SystemConfig, probe_lambdas, horizon: int = 5000, seed: int = 0,
                      details: dict | None = None) -> float:
    """Largest probe arrival rate that LyCD keeps stable (queue ratio <= 2)."""
    stable = []
    for lam in sorted(float(v) for v in probe_lambdas):
        run_cfg = replace(cfg, arrival_rate=lam)
        if lam == 0:
            ratio = 0.0
        else:
            ec = ExperimentConfig(scenario="lydroo", slots=horizon, seed=seed, policy="lycd")
            ratio = run_lydroo(ec, run_cfg).summary.queue_ratio
        if details is not None:
            details[lam] = ratio
        log.info("capacity probe lambda=%.4g ratio=%.3f", lam, ratio)
        if ratio <= 2.0:
            stable.append(lam)
    if not stable:
        raise CapacityError("no probe arrival rate was stable; try smaller probes")
    return max(stable)


# ---------------------------------------------------------------------------
# runtime benchmark


@dataclass
class BenchRow:
    method: str
    n: int
    trials: int
    mean_us: float
    p95_us: float
    mean_calls: float


BENCH_METHODS = ("droo", "cd", "enum", "lc", "ec")


def bench_runtime(methods, n_list, trials: int, cfg_template: SystemConfig | None = None,
                  checkpoints: dict | None = None, seed: int = 0) -> list[BenchRow]:
    """Per-decision wall time on freshly drawn wpt instances, sequential solver calls.

    DROO is timed from features to the chosen action (K critic calls);
    training is not part of a decision.
    """
    checkpoints = checkpoints or {}
    rows = []
    for n in n_list:
        base = cfg_template or SystemConfig()
        cfg = SystemConfig(**{**base.to_dict(), "n_devices": n, "weights": None, "mean_gain": None,
                              "power_budget": base.power_budget[0]})
        for method in methods:
            if method not in BENCH_METHODS:
                raise ValueError(f"unknown bench method {method!r}")
            if method == "enum" and n > MAX_ENUM_DEVICES:
                log.warning("skipping enum at N=%d", n)
                continue
            droo = None
            if method == "droo":
                if n not in checkpoints:
                    raise FileNotFoundError(f"no DROO checkpoint for N={n}")
                model, scaling, meta = act.checkpoint_load(checkpoints[n])
                if model.layer_dims[-1] != n:
                    raise ValueError(f"checkpoint for N={model.layer_dims[-1]} used at N={n}")
                droo = (model, scaling or act.FeatureScaling.for_config(cfg), int(meta.get("k", n)))
            rng = np.random.default_rng([seed, n])
            times, calls = [], []
            for _ in range(trials):
                obs = SlotObservation.from_gains(gen_channels(cfg, rng))
                start = time.perf_counter()
                if method == "droo":
                    model, scaling, k = droo
                    feat = act.featurize(cfg, obs, "wpt", scaling)
                    cands = act.quantize(act.forward(model, feat), k)
                    best_action(cfg, obs, cands, "wpt", vectorized=False)
                    calls.append(len(cands))
                elif method == "cd":
                    calls.append(coordinate_descent(cfg, obs, "wpt", vectorized=False).solver_calls)
                elif method == "enum":
                    calls.append(enumerate_opt(cfg, obs, "wpt").solver_calls)
                elif method == "lc":
                    calls.append(all_local(cfg, obs, "wpt").solver_calls)
                else:
                    calls.append(all_edge(cfg, obs, "wpt").solver_calls)
                times.append((time.perf_counter() - start) * 1e6)
            rows.append(BenchRow(method, n, trials, float(np.mean(times)),
                                 float(np.percentile(times, 95)), float(np.mean(calls))))
    return rows


# ---------------------------------------------------------------------------
# CSV output

CSV_SELECTORS = ("ncr", "loss", "queues", "power", "bench")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".9g")


def csv_rows(stream, what: str, window: int = 200):
    """Header and rows for a selector; see README for the schemas."""
    stream = list(stream)
    if what == "bench":
        header = ["method", "n", "trials", "mean_us", "p95_us", "mean_calls"]
        rows = [[r.method, r.n, r.trials, r.mean_us, r.p95_us, r.mean_calls] for r in stream]
        return header, rows
    if what == "ncr":
        ma = moving_average([r.ncr for r in stream], window)
        return ["t", "ncr", "ncr_ma"], [[r.t, r.ncr, m] for r, m in zip(stream, ma)]
    if what == "loss":
        return ["t", "loss"], [[r.t, r.loss] for r in stream]
    n = 0
    for r in stream:
        if r.data_q is not None:
            n = r.data_q.size
            break
    if what == "queues":
        header = ["t", "q_avg", "y_avg"] + [f"q_{i + 1}" for i in range(n)] + [f"y_{i + 1}" for i in range(n)]
        rows = []
        for r in stream:
            if r.data_q is None:
                rows.append([r.t, None, None] + [None] * 2 * n)
            else:
                rows.append([r.t, r.data_q.mean(), r.energy_q.mean(), *r.data_q, *r.energy_q])
        return header, rows
    if what == "power":
        header = ["t", "power_avg", "power_run_avg"] + [f"p_{i + 1}" for i in range(n)]
        rows = []
        total = 0.0
        for k, r in enumerate(stream):
            if r.energy is None:
                rows.append([r.t, None, None] + [None] * n)
                continue
            p = r.energy  # slot_len is folded in by the caller when != 1
            total += float(p.mean())
            rows.append([r.t, p.mean(), total / (k + 1), *p])
        return header, rows
    raise ValueError(f"unknown CSV selector {what!r}; expected one of {CSV_SELECTORS}")


def emit_csv(stream, what: str, path, window: int = 200, slot_len: float = 1.0) -> Path:
    if what == "power" and slot_len != 1.0:
        stream = [replace(r, energy=None if r.energy is None else r.energy / slot_len) for r in stream]
    header, rows = csv_rows(stream, what, window)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path = Path(path)
    try:
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# run directories

_ARRAY_FIELDS = ("x", "processed", "data_q", "energy_q", "energy")
_SCALAR_FIELDS = ("t", "utility", "score", "optimal_utility", "ncr", "loss", "k_used",
                  "chosen_index", "decision_time_us")


def save_records(records, path) -> Path:
    arrays = {}
    for name in _SCALAR_FIELDS:
        arrays[name] = np.array([getattr(r, name) for r in records])
    for name in _ARRAY_FIELDS:
        if records and getattr(records[0], name) is not None:
            arrays[name] = np.array([getattr(r, name) for r in records])
    names = sorted({k for r in records for k in r.baseline})
    for b in names:
        arrays[f"baseline_{b}"] = np.array([r.baseline.get(b, math.nan) for r in records])
    path = Path(path)
    with path.open("wb") as fh:
        np.savez_compressed(fh, **arrays)
    return path


def load_records(path) -> list[SlotRecord]:
    with np.load(path) as data:
        cols = {k: data[k] for k in data.files}
    n = cols["t"].size
    out = []
    for i in range(n):
        kw = {name: cols[name][i].item() for name in _SCALAR_FIELDS}
        for name in _ARRAY_FIELDS:
            if name in cols:
                kw[name] = cols[name][i]
        kw["baseline"] = {k[len("baseline_"):]: float(v[i]) for k, v in cols.items() if k.startswith("baseline_")}
        out.append(SlotRecord(**kw))
    return out


def write_run_dir(result: RunResult, out_dir, tc: act.TrainConfig | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {"system": result.cfg.to_dict(), "experiment": result.ec.to_dict(),
                "train": vars(tc) if tc is not None else None}
    (out / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if result.model is not None:
        act.checkpoint_save(result.model, result.scaling, out / "actor.json",
                            meta={"k": result.k_final, "scenario": result.ec.scenario})
    save_records(result.records, out / "records.npz")
    window = result.ec.metric_window
    for what in ("ncr", "loss", "queues", "power"):
        emit_csv(result.records, what, out / f"{what}.csv", window, result.cfg.slot_len)
    (out / "summary.json").write_text(json.dumps(result.summary.to_dict(), indent=2) + "\n", encoding="utf-8")
    return out

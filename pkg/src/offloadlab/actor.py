"""Learned actor: MLP policy, K-candidate quantizers, replay memory, training."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import SlotObservation, SystemConfig

CHECKPOINT_FORMAT = "offloadlab-actor/1"
HIDDEN = (120, 80)


# ---------------------------------------------------------------------------
# features


@dataclass
class FeatureScaling:
    """Divisors that bring each input group to O(1)."""

    gain: np.ndarray
    arrival: float = 1.0
    queue: float = 1.0
    energy: float = 1.0

    @classmethod
    def for_config(cls, cfg: SystemConfig) -> "FeatureScaling":
        lam = cfg.arrival_rate if cfg.arrival_rate > 0 else cfg.bit_unit
        # typical backlogs are a few slots of arrivals; energy queues sit
        # around a few energy units
        return cls(gain=cfg.mean_gain.copy(), arrival=lam, queue=10.0 * lam,
                   energy=10.0 * cfg.energy_unit)

    def to_dict(self) -> dict:
        return {"gain": self.gain.tolist(), "arrival": self.arrival,
                "queue": self.queue, "energy": self.energy}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaling":
        return cls(np.asarray(d["gain"], dtype=float), float(d["arrival"]),
                   float(d["queue"]), float(d["energy"]))


def featurize(cfg: SystemConfig, obs: SlotObservation, mode: str,
              scaling: FeatureScaling | None = None) -> np.ndarray:
    scaling = scaling or FeatureScaling.for_config(cfg)
    gains = obs.gains / scaling.gain
    if mode == "wpt":
        return gains
    if mode == "lyapunov":
        return np.concatenate([
            gains,
            obs.arrivals / scaling.arrival,
            obs.queues.data_q / scaling.queue,
            obs.queues.energy_q / scaling.energy,
        ])
    raise ValueError(f"unknown mode {mode!r}")


def input_dim(n: int, mode: str) -> int:
    return n if mode == "wpt" else 4 * n


# ---------------------------------------------------------------------------
# network


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class ActorModel:
    """Fully connected net, ReLU hidden layers and a logistic output layer.

    Layer k maps h -> W_k h + b_k with W_k of shape (out, in).
    """

    def __init__(self, layer_dims, weights=None, biases=None, rng=None):
        self.layer_dims = [int(d) for d in layer_dims]
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"bad layer_dims {layer_dims}")
        if weights is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weights, biases = [], []
            for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
                bound = 1.0 / math.sqrt(fan_in)
                weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
                biases.append(rng.uniform(-bound, bound, fan_out))
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self._check()
        self._adam = None

    @classmethod
    def for_problem(cls, n: int, mode: str, rng=None) -> "ActorModel":
        return cls([input_dim(n, mode), *HIDDEN, n], rng=rng)

    def _check(self):
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match layer_dims")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[k + 1], self.layer_dims[k])
            if w.shape != shape:
                raise ValueError(f"layers[{k}].weight: expected shape {shape}, got {w.shape}")
            if b.shape != (shape[0],):
                raise ValueError(f"layers[{k}].bias: expected length {shape[0]}, got {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layers[{k}]: non-finite parameters")

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def logits(self, features):
        h = np.asarray(features, dtype=float)
        if h.shape[-1] != self.layer_dims[0]:
            raise ValueError(f"feature length {h.shape[-1]} != input_dim {self.layer_dims[0]}")
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    def forward_cache(self, X):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def loss_and_grads(self, X, Y):
        """Mean binary cross-entropy over batch and outputs, with gradients."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        acts = self.forward_cache(X)
        z = acts[-1]
        # -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
        loss = float(np.mean(np.logaddexp(0.0, z) - Y * z))
        delta = (_sigmoid(z) - Y) / z.size
        grads_w, grads_b = [], []
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w.append(delta.T @ acts[k])
            grads_b.append(delta.sum(axis=0))
            if k > 0:
                delta = (delta @ self.weights[k]) * (acts[k] > 0)
        grads_w.reverse()
        grads_b.reverse()
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads += [gw, gb]
        return loss, grads


def forward(model: ActorModel, features) -> np.ndarray:
    """Relaxed offloading decision in (0, 1)^N."""
    out = _sigmoid(model.logits(features))
    # keep strictly inside (0, 1) even for saturated logits
    return np.clip(out, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


# ---------------------------------------------------------------------------
# quantizers

QUANTIZERS = ("order-preserving", "noisy")


def _order_preserving(xhat: np.ndarray, K: int) -> np.ndarray:
    n = xhat.size
    out = np.empty((K, n), dtype=np.int8)
    out[0] = xhat > 0.5
    order = np.lexsort((np.arange(n), np.abs(xhat - 0.5)))
    for k in range(1, K):
        v = xhat[order[k - 1]]
        out[k] = (xhat > v) if v > 0.5 else (xhat >= v)
    return out


def quantize(xhat, K: int, kind: str = "order-preserving", rng=None, noise_sigma: float = 0.1) -> np.ndarray:
    """K binary candidates (rows) from a relaxed decision; duplicates are kept."""
    xhat = np.asarray(xhat, dtype=float)
    n = xhat.size
    if not 1 <= K <= n + 1:
        raise ValueError(f"K must lie in [1, {n + 1}], got {K}")
    if kind == "order-preserving":
        return _order_preserving(xhat, K)
    if kind == "noisy":
        if rng is None:
            raise ValueError("noisy quantizer needs an rng")
        out = _order_preserving(xhat, K)
        logit = np.log(xhat) - np.log1p(-xhat)
        for k in range(1, K):
            noisy = _sigmoid(logit + rng.normal(0.0, noise_sigma, n))
            out[k] = _order_preserving(noisy, k + 1)[k]
        return out
    raise ValueError(f"unknown quantizer {kind!r}")


# ---------------------------------------------------------------------------
# replay memory and training


class ReplayMemory:
    """Fixed-capacity ring buffer of (features, label) pairs."""

    def __init__(self, capacity: int, feature_dim: int, label_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.features = np.zeros((capacity, feature_dim))
        self.labels = np.zeros((capacity, label_dim))
        self.write_cursor = 0
        self.size = 0
        self.inserted = 0

    def __len__(self):
        return self.size

    def add(self, features, label) -> None:
        label = np.asarray(label)
        if label.shape != (self.labels.shape[1],):
            raise ValueError(f"label length {label.size} != {self.labels.shape[1]}")
        self.features[self.write_cursor] = features
        self.labels[self.write_cursor] = label
        self.write_cursor = (self.write_cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def ordered(self):
        """Stored samples, oldest first."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (self.write_cursor + np.arange(self.capacity)) % self.capacity
        return self.features[idx], self.labels[idx]

    def sample(self, batch_size: int, rng):
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self.features[idx], self.labels[idx]


def remember(memory: ReplayMemory, features, chosen_x) -> ReplayMemory:
    memory.add(features, chosen_x)
    return memory


@dataclass
class TrainConfig:
    batch_size: int = 128
    train_interval: int = 10
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    quantizer_kind: str = "order-preserving"
    noise_sigma: float = 0.1
    k_adapt_interval: int = 32
    memory_size: int = 1024

    def __post_init__(self):
        if self.batch_size > self.memory_size:
            raise ValueError("batch_size must not exceed memory_size")
        if self.train_interval < 1 or self.k_adapt_interval < 1:
            raise ValueError("intervals must be >= 1")
        if self.quantizer_kind not in QUANTIZERS:
            raise ValueError(f"quantizer_kind must be one of {QUANTIZERS}")


def adam_update(model: ActorModel, grads, tc: TrainConfig) -> None:
    if model._adam is None:
        model._adam = {"t": 0, "m": [np.zeros_like(p) for p in model.params],
                       "v": [np.zeros_like(p) for p in model.params]}
    st = model._adam
    st["t"] += 1
    b1, b2 = tc.adam_beta1, tc.adam_beta2
    corr1 = 1.0 - b1 ** st["t"]
    corr2 = 1.0 - b2 ** st["t"]
    for p, g, m, v in zip(model.params, grads, st["m"], st["v"]):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= tc.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + tc.adam_eps)


def train_step(model: ActorModel, memory: ReplayMemory, tc: TrainConfig, rng) -> float | None:
    """One Adam step on a uniformly drawn batch; None when the memory is under-filled.

    Returns the batch loss before the update.
    """
    if len(memory) < tc.batch_size:
        return None
    X, Y = memory.sample(tc.batch_size, rng)
    loss, grads = model.loss_and_grads(X, Y)
    adam_update(model, grads, tc)
    return loss


def grad_check(model: ActorModel, sample, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all parameters."""
    X, Y = sample
    _, grads = model.loss_and_grads(X, Y)
    worst = 0.0
    for p, g in zip(model.params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            up = model.loss_and_grads(X, Y)[0]
            flat[i] = old - epsilon
            down = model.loss_and_grads(X, Y)[0]
            flat[i] = old
            fd = (up - down) / (2 * epsilon)
            err = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# adaptive K


@dataclass
class KSchedule:
    current_k: int
    history: list = field(default_factory=list)

    def record(self, chosen_index: int) -> None:
        # chosen_index is 0-based
        self.history.append(int(chosen_index) + 1)


def adapt_k(sched: KSchedule, n: int) -> int:
    if sched.history:
        sched.current_k = int(min(max(max(sched.history) + 1, 1), n + 1))
    sched.history.clear()
    return sched.current_k


# ---------------------------------------------------------------------------
# checkpoints


class CheckpointError(ValueError):
    pass


def checkpoint_save(model: ActorModel, scaling: FeatureScaling | None, path, meta: dict | None = None) -> Path:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "layer_dims": model.layer_dims,
        "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in zip(model.weights, model.biases)],
        "scaling": scaling.to_dict() if scaling is not None else None,
        "meta": meta or {},
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path


def checkpoint_load(path):
    """Returns (model, scaling, meta)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a JSON document: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"format: expected {CHECKPOINT_FORMAT!r}, got {doc.get('format')!r}")
    for key in ("layer_dims", "layers"):
        if key not in doc:
            raise CheckpointError(f"{key}: missing")
    try:
        weights = [np.asarray(layer["weight"], dtype=float) for layer in doc["layers"]]
        biases = [np.asarray(layer["bias"], dtype=float) for layer in doc["layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"layers: {exc}") from exc
    try:
        model = ActorModel(doc["layer_dims"], weights, biases)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    scaling = FeatureScaling.from_dict(doc["scaling"]) if doc.get("scaling") else None
    return model, scaling, doc.get("meta", {})

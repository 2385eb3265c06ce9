"""Trainable policies mapping a transition key to a distribution over the
legal outputs of its round.

Two interchangeable implementations: a per-key logit table (deterministic
debugging baseline) and a small fully connected network with one-hot inputs
and a masked soft-max head. Both train with mini-batch gradient descent on
cross-entropy.
"""

from __future__ import annotations

import json
from collections import deque
from typing import Iterable

import numpy as np

from .model import Setting, StateSpace, TransitionKey

CHECKPOINT_VERSION = 1


class TrainingBuffer:
    """Bounded FIFO of (key, target distribution) pairs."""

    def __init__(self, capacity: int = 20000):
        self.capacity = capacity
        self._items: deque[tuple[TransitionKey, np.ndarray]] = deque(maxlen=capacity)

    def append(self, key: TransitionKey, target: np.ndarray) -> None:
        target = np.asarray(target, dtype=np.float64)
        if target.min() < 0 or abs(target.sum() - 1.0) > 1e-6:
            raise ValueError("target must be a distribution")
        self._items.append((key, target))

    def extend(self, pairs: Iterable[tuple[TransitionKey, np.ndarray]]) -> None:
        for key, target in pairs:
            self.append(key, target)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def latest_by_key(self) -> dict[TransitionKey, np.ndarray]:
        out: dict[TransitionKey, np.ndarray] = {}
        for key, target in self._items:
            out[key] = target
        return out

    def mean_by_key(self) -> dict[TransitionKey, np.ndarray]:
        """Average target per key over everything currently buffered. An
        episode-to-episode flip-flop between two outputs shows up here as a
        near-uniform mix even when each single target is sharp."""
        sums: dict[TransitionKey, np.ndarray] = {}
        counts: dict[TransitionKey, int] = {}
        for key, target in self._items:
            if key in sums:
                sums[key] = sums[key] + target
                counts[key] += 1
            else:
                sums[key] = target.copy()
                counts[key] = 1
        return {k: v / counts[k] for k, v in sums.items()}


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class TabularPolicy:
    """Per-key logits; exact and deterministic."""

    implementation = "tabular"

    def __init__(self, setting: Setting, space: StateSpace):
        self.setting = setting
        self.space = space
        self._logits: dict[TransitionKey, np.ndarray] = {}

    def _slot(self, key: TransitionKey) -> np.ndarray:
        if key not in self._logits:
            width = len(self.space.legal_outputs(key.round, self.setting.r))
            self._logits[key] = np.zeros(width)
        return self._logits[key]

    def predict(self, key: TransitionKey) -> np.ndarray:
        return softmax(self._slot(key))

    def train(self, buffer: TrainingBuffer, epochs: int = 10, batch_size: int = 32,
              lr: float = 0.001, rng: np.random.Generator | None = None) -> list[float]:
        if len(buffer) == 0:
            raise ValueError("training buffer is empty")
        rng = rng or np.random.default_rng(0)
        items = list(buffer)
        history = []
        for _ in range(epochs):
            order = rng.permutation(len(items))
            losses = []
            for start in range(0, len(items), batch_size):
                for i in order[start:start + batch_size]:
                    key, target = items[i]
                    logits = self._slot(key)
                    p = softmax(logits)
                    losses.append(float(-(target * np.log(p + 1e-300)).sum()))
                    logits -= lr * (p - target)
            history.append(float(np.mean(losses)))
        return history


class MlpPolicy:
    """Three hidden layers (128/64/32, rectified-linear) over concatenated
    one-hot blocks for round, own state, and each other-slot; output logits
    over the full state alphabet, masked to the round's legal outputs."""

    implementation = "mlp"
    HIDDEN = (128, 64, 32)

    def __init__(self, setting: Setting, space: StateSpace, rng: np.random.Generator | None = None):
        self.setting = setting
        self.space = space
        rng = rng or np.random.default_rng(0)
        a = space.alphabet_size
        self.in_dim = setting.r + setting.n * a
        dims = (self.in_dim,) + self.HIDDEN + (a,)
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out)))
            self.biases.append(np.zeros(d_out))
        self._masks = {}
        for round_ in range(1, setting.r + 1):
            mask = np.full(a, -np.inf)
            mask[space.legal_outputs(round_, setting.r)] = 0.0
            self._masks[round_] = mask
        self._enc_cache: dict[TransitionKey, np.ndarray] = {}

    def encode(self, key: TransitionKey) -> np.ndarray:
        vec = self._enc_cache.get(key)
        if vec is None:
            a = self.space.alphabet_size
            vec = np.zeros(self.in_dim)
            vec[key.round - 1] = 1.0
            vec[self.setting.r + key.own] = 1.0
            for i, s in enumerate(key.others):
                vec[self.setting.r + (i + 1) * a + s] = 1.0
            self._enc_cache[key] = vec
        return vec

    def _forward(self, x: np.ndarray):
        acts = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]
        return acts, logits

    def predict(self, key: TransitionKey) -> np.ndarray:
        _, logits = self._forward(self.encode(key)[None, :])
        legal = self.space.legal_outputs(key.round, self.setting.r)
        masked = logits[0] + self._masks[key.round]
        return softmax(masked)[legal]

    def predict_many(self, keys: list[TransitionKey]) -> list[np.ndarray]:
        if not keys:
            return []
        x = np.stack([self.encode(k) for k in keys])
        _, logits = self._forward(x)
        out = []
        for i, k in enumerate(keys):
            legal = self.space.legal_outputs(k.round, self.setting.r)
            out.append(softmax(logits[i] + self._masks[k.round])[legal])
        return out

    def _loss_and_grads(self, keys, targets_full):
        """Mean masked cross-entropy over a batch and its parameter gradients.
        targets_full are alphabet-wide with zero mass on illegal outputs."""
        x = np.stack([self.encode(k) for k in keys])
        mask = np.stack([self._masks[k.round] for k in keys])
        acts, logits = self._forward(x)
        p = softmax(logits + mask)
        loss = float(-(targets_full * np.log(p + 1e-300)).sum(axis=1).mean())
        b = len(keys)
        delta = (p - targets_full) / b
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            gw[layer] = acts[layer].T @ delta
            gb[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (acts[layer] > 0)
        return loss, gw, gb

    def train(self, buffer: TrainingBuffer, epochs: int = 10, batch_size: int = 32,
              lr: float = 0.001, rng: np.random.Generator | None = None) -> list[float]:
        if len(buffer) == 0:
            raise ValueError("training buffer is empty")
        rng = rng or np.random.default_rng(0)
        items = list(buffer)
        a = self.space.alphabet_size
        keys = [k for k, _ in items]
        targets = np.zeros((len(items), a))
        for i, (k, t) in enumerate(items):
            targets[i, self.space.legal_outputs(k.round, self.setting.r)] = t
        history = []
        for _ in range(epochs):
            order = rng.permutation(len(items))
            losses = []
            for start in range(0, len(items), batch_size):
                idx = order[start:start + batch_size]
                loss, gw, gb = self._loss_and_grads([keys[i] for i in idx], targets[idx])
                losses.append(loss)
                for layer in range(len(self.weights)):
                    self.weights[layer] -= lr * gw[layer]
                    self.biases[layer] -= lr * gb[layer]
            history.append(float(np.mean(losses)))
        return history

    # flat-parameter access, used by checkpoints and the gradient check
    def get_params(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights] + [b.ravel() for b in self.biases])

    def set_params(self, flat: np.ndarray) -> None:
        pos = 0
        for w in self.weights:
            w[...] = flat[pos:pos + w.size].reshape(w.shape)
            pos += w.size
        for b in self.biases:
            b[...] = flat[pos:pos + b.size]
            pos += b.size

    def batch_loss(self, keys, targets_full) -> float:
        loss, _, _ = self._loss_and_grads(keys, targets_full)
        return loss

    def batch_grad(self, keys, targets_full) -> np.ndarray:
        _, gw, gb = self._loss_and_grads(keys, targets_full)
        return np.concatenate([g.ravel() for g in gw] + [g.ravel() for g in gb])


def save_checkpoint(policy, path: str) -> None:
    if policy.implementation != "mlp":
        raise ValueError("only mlp policies are checkpointed")
    s = policy.setting
    meta = {
        "version": CHECKPOINT_VERSION,
        "implementation": policy.implementation,
        "setting": {"n": s.n, "r": s.r, "f": s.f, "k": s.k, "use_proc_id": s.use_proc_id},
        "alphabet": list(policy.space.labels),
        "hidden": list(policy.HIDDEN),
    }
    np.savez(path, meta=json.dumps(meta), params=policy.get_params())


def load_checkpoint(path: str, space: StateSpace):
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint version %s" % meta["version"])
    s = meta["setting"]
    setting = Setting(n=s["n"], r=s["r"], f=s["f"], k=s["k"], use_proc_id=s["use_proc_id"])
    policy = MlpPolicy(setting, space)
    policy.set_params(data["params"])
    return policy

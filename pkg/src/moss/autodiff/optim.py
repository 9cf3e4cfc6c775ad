"""Gradient-descent steps over a ParameterStore."""

from __future__ import annotations

import numpy as np

from .params import ParameterStore


class TrainingError(RuntimeError):
    pass


def _check_grads(store: ParameterStore):
    for name, t in store.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")


def clip_global_norm(store: ParameterStore, max_norm: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for _, t in store.items():
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        factor = max_norm / (norm + 1e-12)
        for _, t in store.items():
            if t.grad is not None:
                t.grad *= factor
    return norm


def sgd_step(store: ParameterStore, lr: float):
    """Plain gradient descent; gradients are cleared afterwards."""
    _check_grads(store)
    for _, t in store.items():
        if t.grad is not None:
            t.data -= (lr * t.grad).astype(t.data.dtype)
    store.zero_grads()


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, lr: float = 0.003, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, store: ParameterStore, lr: float | None = None):
        _check_grads(store)
        lr = self.lr if lr is None else lr
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in store.items():
            g = p.grad
            if g is None:
                continue
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros_like(g, dtype=np.float64)
                self._v[name] = np.zeros_like(g, dtype=np.float64)
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g.astype(np.float64) ** 2)
            update = lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.data -= update.astype(p.data.dtype)
        store.zero_grads()


def adam_step(store: ParameterStore, lr: float, state: Adam | None = None) -> Adam:
    """Single Adam update; pass the returned state back in to continue."""
    if state is None:
        state = Adam(lr=lr)
    state.step(store, lr=lr)
    return state

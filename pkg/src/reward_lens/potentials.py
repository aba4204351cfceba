"""Parametrised state potentials with exact parameter gradients.

All models evaluate on batches.  Terminal states are pinned inside the model:
their value and gradient are zero for any parameter vector.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import MC_GOAL_POSITION, MC_MAX_SPEED, MC_MIN_POSITION, Transition
from .errors import InputError, RewardFileError, ValidationError

# Dividing by the largest absolute bound maps mountain-car states into [-1, 1]
# while keeping the encoding linear (zero stays zero).
MC_FEATURE_SCALE = (abs(MC_MIN_POSITION), MC_MAX_SPEED)


class Threshold:
    """Terminal predicate ``state[feature] >= at_least`` for continuous states."""

    def __init__(self, feature: int, at_least: float):
        self.feature = int(feature)
        self.at_least = float(at_least)

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return np.asarray(states, dtype=float)[..., self.feature] >= self.at_least

    def to_dict(self) -> dict:
        return {"feature": self.feature, "at_least": self.at_least}

    def __eq__(self, other):
        return isinstance(other, Threshold) and self.to_dict() == other.to_dict()


MC_TERMINAL = Threshold(0, MC_GOAL_POSITION)


class PotentialModel:
    kind: str = ""
    params: np.ndarray

    @property
    def n_params(self) -> int:
        return len(self.params)

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=float)
        if params.shape != self.params.shape:
            raise InputError(f"expected {self.params.shape} params, got {params.shape}")
        self.params = params.copy()

    def terminal(self, states) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, states) -> np.ndarray:
        raise NotImplementedError

    def forward(self, states):
        """Values plus whatever ``backward`` needs to avoid a second pass."""
        return self(states), states

    def backward(self, cache, upstream) -> np.ndarray:
        return self.vjp(cache, upstream)

    def vjp(self, states, upstream) -> np.ndarray:
        """Return ``sum_i upstream[i] * dPhi(states[i]) / dtheta``."""
        raise NotImplementedError

    def grad(self, state) -> np.ndarray:
        states = self._as_batch(state)
        return self.vjp(states, np.ones(1))

    def value(self, state) -> float:
        return float(self(self._as_batch(state))[0])

    def _as_batch(self, state):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class TabularPotential(PotentialModel):
    kind = "tabular"

    def __init__(self, n_states: int, terminal: Sequence[int] = (), params=None):
        self.n_states = int(n_states)
        self.mask = np.zeros(self.n_states, dtype=bool)
        terminal = [int(t) for t in terminal]
        if any(not 0 <= t < self.n_states for t in terminal):
            raise InputError("terminal index out of range")
        self.mask[terminal] = True
        self.params = np.zeros(self.n_states) if params is None else np.asarray(params, dtype=float).copy()
        if self.params.shape != (self.n_states,):
            raise InputError(f"tabular potential needs {self.n_states} params")

    @property
    def terminal_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.mask)]

    def _index(self, states) -> np.ndarray:
        idx = np.asarray(states)
        if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
            raise InputError("tabular potential expects a 1-d batch of integer state indices")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_states):
            raise InputError("state index out of range")
        return idx

    def _as_batch(self, state):
        return np.array([state], dtype=np.int64)

    def terminal(self, states) -> np.ndarray:
        return self.mask[self._index(states)]

    def table(self) -> np.ndarray:
        return np.where(self.mask, 0.0, self.params)

    def __call__(self, states) -> np.ndarray:
        return self.table()[self._index(states)]

    def vjp(self, states, upstream) -> np.ndarray:
        idx = self._index(states)
        g = np.bincount(idx, weights=np.asarray(upstream, dtype=float), minlength=self.n_states)
        g[self.mask] = 0.0
        return g

    def to_dict(self) -> dict:
        return {"kind": self.kind, "terminal_mask": self.terminal_indices, "params": self.params.tolist()}


class _FeaturePotential(PotentialModel):
    n_features: int

    def __init__(self, n_features: int, terminal: Threshold | None, scale):
        self.n_features = int(n_features)
        self.terminal_fn = terminal
        self.scale = None if scale is None else np.asarray(scale, dtype=float)
        if self.scale is not None and self.scale.shape != (self.n_features,):
            raise InputError("scale must have one entry per feature")

    def _as_batch(self, state):
        return np.asarray(state, dtype=float).reshape(1, -1)

    def _features(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise InputError(f"expected states of shape (n, {self.n_features}), got {x.shape}")
        return x if self.scale is None else x / self.scale

    def terminal(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=float)
        if self.terminal_fn is None:
            return np.zeros(len(x), dtype=bool)
        return self.terminal_fn(x)

    def _meta(self) -> dict:
        return {
            "terminal_mask": None if self.terminal_fn is None else self.terminal_fn.to_dict(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }


class LinearPotential(_FeaturePotential):
    """``Phi(s) = theta . features(s)`` with no bias term."""

    kind = "linear"

    def __init__(self, n_features: int, terminal: Threshold | None = None, scale=None, params=None):
        super().__init__(n_features, terminal, scale)
        self.params = np.zeros(self.n_features) if params is None else np.asarray(params, dtype=float).copy()
        if self.params.shape != (self.n_features,):
            raise InputError(f"linear potential needs {self.n_features} params")

    def __call__(self, states) -> np.ndarray:
        x = self._features(states)
        return np.where(self.terminal(states), 0.0, x @ self.params)

    def vjp(self, states, upstream) -> np.ndarray:
        x = self._features(states)
        u = np.where(self.terminal(states), 0.0, np.asarray(upstream, dtype=float))
        return u @ x

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_features": self.n_features, **self._meta(), "params": self.params.tolist()}


class MLPPotential(_FeaturePotential):
    """tanh MLP with a linear scalar output.

    Hidden layers use uniform init on ``+-1/sqrt(fan_in)``; the output layer
    starts at zero so the untrained potential is identically zero.
    """

    kind = "mlp"

    def __init__(
        self,
        layer_sizes: Sequence[int] = (2, 64, 64, 1),
        seed: int = 0,
        terminal: Threshold | None = None,
        scale=None,
        params=None,
    ):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(self.layer_sizes) < 2 or self.layer_sizes[-1] != 1:
            raise InputError("layer_sizes must start with the input size and end with 1")
        super().__init__(self.layer_sizes[0], terminal, scale)
        self._shapes = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self._shapes += [(fan_out, fan_in), (fan_out,)]
        n = sum(int(np.prod(s)) for s in self._shapes)
        if params is not None:
            self.params = np.asarray(params, dtype=float).copy()
            if self.params.shape != (n,):
                raise InputError(f"mlp with layers {self.layer_sizes} needs {n} params")
            return
        rng = np.random.default_rng(seed)
        chunks = []
        n_layers = len(self.layer_sizes) - 1
        for k in range(n_layers):
            (fan_out, fan_in), _ = self._shapes[2 * k], self._shapes[2 * k + 1]
            if k == n_layers - 1:
                chunks += [np.zeros(fan_out * fan_in), np.zeros(fan_out)]
            else:
                bound = 1.0 / np.sqrt(fan_in)
                chunks += [rng.uniform(-bound, bound, fan_out * fan_in), rng.uniform(-bound, bound, fan_out)]
        self.params = np.concatenate(chunks)

    def _unflatten(self, flat: np.ndarray) -> list[np.ndarray]:
        out, i = [], 0
        for shape in self._shapes:
            n = int(np.prod(shape))
            out.append(flat[i : i + n].reshape(shape))
            i += n
        return out

    def _forward(self, x: np.ndarray):
        tensors = self._unflatten(self.params)
        acts = [x]
        h = x
        n_layers = len(tensors) // 2
        for k in range(n_layers):
            w, b = tensors[2 * k], tensors[2 * k + 1]
            z = h @ w.T + b
            h = np.tanh(z) if k < n_layers - 1 else z
            acts.append(h)
        return tensors, acts

    def forward(self, states):
        tensors, acts = self._forward(self._features(states))
        term = self.terminal(states)
        return np.where(term, 0.0, acts[-1][:, 0]), (tensors, acts, term)

    def backward(self, cache, upstream) -> np.ndarray:
        tensors, acts, term = cache
        delta = np.where(term, 0.0, np.asarray(upstream, dtype=float))[:, None]
        n_layers = len(tensors) // 2
        grads: list[np.ndarray] = [None] * len(tensors)
        for k in reversed(range(n_layers)):
            grads[2 * k] = delta.T @ acts[k]
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ tensors[2 * k]) * (1.0 - acts[k] ** 2)
        return np.concatenate([g.ravel() for g in grads])

    def __call__(self, states) -> np.ndarray:
        return self.forward(states)[0]

    def vjp(self, states, upstream) -> np.ndarray:
        return self.backward(self.forward(states)[1], upstream)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "layer_sizes": list(self.layer_sizes), **self._meta(), "params": self.params.tolist()}


def eval_potential(m: PotentialModel, s) -> float:
    return m.value(s)


def grad_potential_params(m: PotentialModel, s) -> np.ndarray:
    return m.grad(s)


def shaping_term(m: PotentialModel, t: Transition, gamma: float) -> tuple[float, np.ndarray]:
    """``gamma * Phi(s') - Phi(s)`` and its parameter gradient."""
    value = gamma * m.value(t.s_next) - m.value(t.s)
    grad = gamma * m.grad(t.s_next) - m.grad(t.s)
    return value, grad


def potential_from_dict(d: dict) -> PotentialModel:
    try:
        kind = d["kind"]
        params = np.asarray(d["params"], dtype=float)
        if not np.all(np.isfinite(params)):
            raise ValidationError("non-finite potential parameter")
        if kind == "tabular":
            return TabularPotential(len(params), d.get("terminal_mask") or (), params=params)
        term = d.get("terminal_mask")
        term = None if term is None else Threshold(term["feature"], term["at_least"])
        if kind == "linear":
            return LinearPotential(int(d.get("n_features", len(params))), term, d.get("scale"), params=params)
        if kind == "mlp":
            return MLPPotential(d["layer_sizes"], terminal=term, scale=d.get("scale"), params=params)
    except (KeyError, TypeError) as exc:
        raise RewardFileError(f"bad potential checkpoint: {exc}") from exc
    raise RewardFileError(f"unknown potential kind {kind!r}")


def save_potential(m: PotentialModel, path) -> None:
    Path(path).write_text(json.dumps(m.to_dict(), indent=1) + "\n")


def load_potential(path) -> PotentialModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RewardFileError(exc.msg, exc.lineno) from exc
    return potential_from_dict(d)

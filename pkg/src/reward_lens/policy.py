"""Value iteration on gridworlds and the hand-coded mountain-car expert."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import GridSpec, MountainCarState, enumerate_transitions, next_state_table
from .errors import ConvergenceError, InputError
from .rewards import RewardSource, check_gamma

MAX_ITERATIONS = 1_000_000


@dataclass
class QTable:
    values: np.ndarray  # (n_states, n_actions)
    gamma: float
    residual: float
    iterations: int = 0

    @property
    def v(self) -> np.ndarray:
        return self.values.max(axis=1)


def value_iteration(
    spec: GridSpec,
    r: RewardSource,
    gamma: float,
    threshold: float = 1e-10,
    max_iterations: int = MAX_ITERATIONS,
) -> QTable:
    """Optimal Q under deterministic grid dynamics.

    Terminal cells end the episode: their state value is held at 0, so a
    transition into one collects its reward and nothing after it.
    """
    gamma = check_gamma(gamma)
    if not threshold > 0:
        raise InputError("threshold must be > 0")
    nxt = next_state_table(spec)
    rewards = np.asarray(r.evaluate(enumerate_transitions(spec)), dtype=float).reshape(nxt.shape)
    terminal = spec.terminal_mask()
    v = np.zeros(spec.n_states)
    for it in range(1, max_iterations + 1):
        q = rewards + gamma * v[nxt]
        new_v = np.where(terminal, 0.0, q.max(axis=1))
        residual = float(np.max(np.abs(new_v - v)))
        v = new_v
        if residual < threshold:
            return QTable(rewards + gamma * v[nxt], gamma, residual, it)
    raise ConvergenceError(f"value iteration exceeded {max_iterations} iterations (residual {residual:.3g})")


def bellman_residual(spec: GridSpec, r: RewardSource, q: QTable) -> float:
    """Max change of Q under one more Bellman optimality backup."""
    nxt = next_state_table(spec)
    rewards = np.asarray(r.evaluate(enumerate_transitions(spec)), dtype=float).reshape(nxt.shape)
    v = np.where(spec.terminal_mask(), 0.0, q.values.max(axis=1))
    return float(np.max(np.abs(rewards + q.gamma * v[nxt] - q.values)))


def greedy_policy(q: QTable, tie_tol: float = 1e-9) -> list[frozenset[int]]:
    """Per state, every action whose Q is within ``tie_tol`` of the best."""
    best = q.values.max(axis=1, keepdims=True)
    near = q.values >= best - tie_tol
    return [frozenset(int(a) for a in np.flatnonzero(row)) for row in near]


def mc_expert(s: MountainCarState) -> float:
    """Bang-bang energy pumping: push in the direction of motion."""
    return 1.0 if s[1] >= 0 else -1.0

"""Sparsity and smoothness costs with derivatives w.r.t. reward outputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .env import GridSpec, Trajectory, TransitionPairs, Transitions, enumerate_adjacent_pairs, enumerate_transitions
from .errors import InputError
from .rewards import RewardSource

PENALTIES = ("l1", "log1p_abs")
FAMILIES = ("sparse", "smooth")


def penalty_array(kind: str, x) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``f`` and ``f'``; the derivative at 0 is taken to be 0."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    sign = np.sign(x)
    if kind == "l1":
        return ax, sign
    if kind == "log1p_abs":
        return np.log1p(ax), sign / (1.0 + ax)
    raise InputError(f"unknown penalty {kind!r}; expected one of {PENALTIES}")


def penalty(kind: str, x: float) -> tuple[float, float]:
    if not np.isfinite(x):
        raise InputError("penalty argument must be finite")
    v, d = penalty_array(kind, x)
    return float(v), float(d)


def sparsity_from_values(kind: str, values: np.ndarray) -> tuple[float, np.ndarray]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InputError("empty batch")
    f, df = penalty_array(kind, values)
    n = len(values)
    return float(np.mean(f)), df / n


def smoothness_from_values(kind: str, first: np.ndarray, second: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    first = np.asarray(first, dtype=float)
    if first.size == 0:
        raise InputError("empty batch")
    f, df = penalty_array(kind, first - np.asarray(second, dtype=float))
    n = len(first)
    return float(np.mean(f)), df / n, -df / n


def sparsity_cost(r: RewardSource, batch: Transitions, kind: str) -> tuple[float, np.ndarray]:
    """Mean penalty of the reward and the per-item upstream derivatives."""
    if len(batch) == 0:
        raise InputError("empty batch")
    return sparsity_from_values(kind, r.evaluate(batch))


def smoothness_cost(r: RewardSource, pairs: TransitionPairs, kind: str) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean penalty of reward differences along chained pairs.

    Returns the cost and the derivatives w.r.t. the first and second member
    of every pair.
    """
    if len(pairs) == 0:
        raise InputError("empty batch")
    if not pairs.is_chained():
        raise InputError("pairs are not chained: first.s_next != second.s")
    return smoothness_from_values(kind, r.evaluate(pairs.first), r.evaluate(pairs.second))


# --- sampling distributions ---------------------------------------------------


@dataclass(frozen=True)
class UniformTransitions:
    """Every transition of a gridworld (or every chained pair), equally weighted."""

    spec: GridSpec

    def support(self, family: str):
        return enumerate_transitions(self.spec) if family == "sparse" else enumerate_adjacent_pairs(self.spec)


@dataclass(frozen=True)
class TrajectoryPool:
    """Transitions (or consecutive pairs) pooled from sampled trajectories."""

    trajectories: tuple[Trajectory, ...]
    seed: int = 0

    def __init__(self, trajectories: Sequence[Trajectory], seed: int = 0):
        object.__setattr__(self, "trajectories", tuple(trajectories))
        object.__setattr__(self, "seed", int(seed))
        if not self.trajectories:
            raise InputError("trajectory pool is empty")

    def support(self, family: str):
        return pool_items(self.trajectories, family)


Distribution = Union[UniformTransitions, TrajectoryPool]


@dataclass(frozen=True)
class CostSpec:
    family: str
    penalty: str
    distribution: Distribution

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown cost family {self.family!r}")
        if self.penalty not in PENALTIES:
            raise InputError(f"unknown penalty {self.penalty!r}")

    @property
    def name(self) -> str:
        return f"{self.family}-{'l1' if self.penalty == 'l1' else 'log'}"

    def support(self):
        return self.distribution.support(self.family)

    def evaluate(self, r: RewardSource) -> float:
        """Cost of ``r`` over the whole support of the distribution."""
        items = self.support()
        if self.family == "sparse":
            return sparsity_cost(r, items, self.penalty)[0]
        return smoothness_cost(r, items, self.penalty)[0]


def pool_items(trajs: Sequence[Trajectory], family: str):
    if not trajs:
        raise InputError("trajectories must be nonempty")
    if family == "sparse":
        return Transitions.concat([t.transitions() for t in trajs if t.length > 0])
    if family == "smooth":
        firsts, seconds = [], []
        for t in trajs:
            if t.length < 2:
                continue
            tr = t.transitions()
            firsts.append(tr.take(np.arange(t.length - 1)))
            seconds.append(tr.take(np.arange(1, t.length)))
        if not firsts:
            raise InputError("no trajectory has two consecutive transitions")
        return TransitionPairs(Transitions.concat(firsts), Transitions.concat(seconds))
    raise InputError(f"unknown cost family {family!r}")


def epoch_batches(n_items: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    """Infinite stream of index batches; each epoch is a fresh permutation.

    The last batch of an epoch may be short so every item appears exactly
    once per epoch.
    """
    if batch_size < 1:
        raise InputError("batch_size must be >= 1")
    if batch_size > n_items:
        raise InputError(f"batch_size {batch_size} larger than pool of {n_items}")
    rng = np.random.default_rng(seed)
    while True:
        perm = rng.permutation(n_items)
        for start in range(0, n_items, batch_size):
            yield perm[start : start + batch_size]


def trajectory_batches(trajs: Sequence[Trajectory], family: str, batch_size: int, seed: int):
    """Yield batches of transitions (sparse) or chained pairs (smooth)."""
    items = pool_items(trajs, family)
    if not 1 <= batch_size <= len(items):
        raise InputError(f"batch_size {batch_size} not in [1, {len(items)}]")
    return (items.take(idx) for idx in epoch_batches(len(items), batch_size, seed))

"""Benchmark environments: a deterministic gridworld and continuous mountain car.

Grid states are cells ``(x, y)`` with ``y`` increasing upward.  Enumerations
use the row-major state index ``y * width + x`` and the fixed action order
``Stay, Up, Down, Left, Right``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InputError

Cell = tuple[int, int]


class GridAction(enum.IntEnum):
    STAY = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


N_GRID_ACTIONS = len(GridAction)

ACTION_DELTAS: dict[GridAction, Cell] = {
    GridAction.STAY: (0, 0),
    GridAction.UP: (0, 1),
    GridAction.DOWN: (0, -1),
    GridAction.LEFT: (-1, 0),
    GridAction.RIGHT: (1, 0),
}


@dataclass(frozen=True)
class GridSpec:
    """Shape of a deterministic gridworld.

    ``terminal_cells`` end an episode: their value and potential are zero.
    They only self-loop under every action when ``absorbing`` is set; by
    default they keep the ordinary wall-clipping dynamics so that every cell
    has the same five outgoing transitions.
    """

    width: int
    height: int
    goal: Cell | None = None
    terminal_cells: frozenset[Cell] = field(default_factory=frozenset)
    horizon: int = 100
    absorbing: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InputError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.horizon < 1:
            raise InputError("horizon must be >= 1")
        if self.goal is None:
            object.__setattr__(self, "goal", (self.width - 1, self.height - 1))
        object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        object.__setattr__(
            self, "terminal_cells", frozenset(tuple(int(v) for v in c) for c in self.terminal_cells)
        )
        if not self.in_bounds(self.goal):
            raise InputError(f"goal {self.goal} outside {self.width}x{self.height} grid")
        for c in self.terminal_cells:
            if not self.in_bounds(c):
                raise InputError(f"terminal cell {c} outside grid")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def n_transitions(self) -> int:
        return self.n_states * N_GRID_ACTIONS

    def in_bounds(self, cell: Sequence[int]) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def index(self, cell: Sequence[int]) -> int:
        if not self.in_bounds(cell):
            raise InputError(f"cell {tuple(cell)} outside {self.width}x{self.height} grid")
        return int(cell[1]) * self.width + int(cell[0])

    def cell(self, index: int) -> Cell:
        if not 0 <= index < self.n_states:
            raise InputError(f"state index {index} out of range")
        return (int(index) % self.width, int(index) // self.width)

    def cells(self) -> list[Cell]:
        return [self.cell(i) for i in range(self.n_states)]

    def terminal_indices(self) -> np.ndarray:
        return np.array(sorted(self.index(c) for c in self.terminal_cells), dtype=np.int64)

    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[self.terminal_indices()] = True
        return mask


def grid_step(spec: GridSpec, s: Sequence[int], a: GridAction | int) -> Cell:
    """Deterministic move; off-grid moves stay put."""
    if not spec.in_bounds(s):
        raise InputError(f"state {tuple(s)} outside {spec.width}x{spec.height} grid")
    s = (int(s[0]), int(s[1]))
    if spec.absorbing and s in spec.terminal_cells:
        return s
    dx, dy = ACTION_DELTAS[GridAction(a)]
    nxt = (s[0] + dx, s[1] + dy)
    return nxt if spec.in_bounds(nxt) else s


def next_state_table(spec: GridSpec) -> np.ndarray:
    """``table[s, a]`` is the index of the successor state."""
    table = np.empty((spec.n_states, N_GRID_ACTIONS), dtype=np.int64)
    for i in range(spec.n_states):
        c = spec.cell(i)
        for a in GridAction:
            table[i, a] = spec.index(grid_step(spec, c, a))
    return table


class Transition(NamedTuple):
    s: object
    a: object
    s_next: object


@dataclass(frozen=True)
class Transitions:
    """A batch of transitions stored column-wise.

    For gridworlds the states are integer indices of shape ``(n,)``; for
    mountain car they are ``(n, 2)`` arrays of (position, velocity).
    """

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray

    def __post_init__(self):
        if not (len(self.s) == len(self.a) == len(self.s_next)):
            raise InputError("transition columns have different lengths")

    def __len__(self) -> int:
        return len(self.a)

    def __getitem__(self, i: int) -> Transition:
        return Transition(self.s[i], self.a[i], self.s_next[i])

    def take(self, idx) -> "Transitions":
        idx = np.asarray(idx, dtype=np.int64)
        return Transitions(self.s[idx], self.a[idx], self.s_next[idx])

    @classmethod
    def from_list(cls, items: Iterable[Sequence]) -> "Transitions":
        items = list(items)
        if not items:
            return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        s, a, sn = zip(*items)
        return cls(np.asarray(s), np.asarray(a), np.asarray(sn))

    @classmethod
    def concat(cls, parts: Sequence["Transitions"]) -> "Transitions":
        return cls(
            np.concatenate([p.s for p in parts]),
            np.concatenate([p.a for p in parts]),
            np.concatenate([p.s_next for p in parts]),
        )


@dataclass(frozen=True)
class TransitionPairs:
    """Aligned consecutive transitions: ``first[i].s_next == second[i].s``."""

    first: Transitions
    second: Transitions

    def __post_init__(self):
        if len(self.first) != len(self.second):
            raise InputError("pair columns have different lengths")

    def __len__(self) -> int:
        return len(self.first)

    def take(self, idx) -> "TransitionPairs":
        return TransitionPairs(self.first.take(idx), self.second.take(idx))

    def is_chained(self) -> bool:
        return bool(np.all(np.asarray(self.first.s_next) == np.asarray(self.second.s)))


def enumerate_transitions(spec: GridSpec) -> Transitions:
    """Every (s, a) once, row-major states, fixed action order."""
    table = next_state_table(spec)
    s = np.repeat(np.arange(spec.n_states), N_GRID_ACTIONS)
    a = np.tile(np.arange(N_GRID_ACTIONS), spec.n_states)
    return Transitions(s, a, table.reshape(-1))


def enumerate_adjacent_pairs(spec: GridSpec) -> TransitionPairs:
    """Each enumerated transition followed by each of the five next actions."""
    table = next_state_table(spec)
    first = enumerate_transitions(spec)
    rep = first.take(np.repeat(np.arange(len(first)), N_GRID_ACTIONS))
    a2 = np.tile(np.arange(N_GRID_ACTIONS), len(first))
    mid = rep.s_next
    second = Transitions(mid, a2, table[mid, a2])
    return TransitionPairs(rep, second)


# --- mountain car -----------------------------------------------------------

MC_MIN_POSITION = -1.2
MC_MAX_POSITION = 0.6
MC_MAX_SPEED = 0.07
MC_POWER = 0.0015
MC_GRAVITY = 0.0025
MC_GOAL_POSITION = 0.45
MC_START_RANGE = (-0.6, -0.4)


class MountainCarState(NamedTuple):
    position: float
    velocity: float


def mc_step_batch(states: np.ndarray, forces: np.ndarray) -> np.ndarray:
    """Vectorised dynamics on an ``(n, 2)`` state array. No range checks."""
    states = np.asarray(states, dtype=float)
    p, v = states[..., 0], states[..., 1]
    v2 = np.clip(v + MC_POWER * forces - MC_GRAVITY * np.cos(3.0 * p), -MC_MAX_SPEED, MC_MAX_SPEED)
    p2 = np.clip(p + v2, MC_MIN_POSITION, MC_MAX_POSITION)
    v2 = np.where((p2 <= MC_MIN_POSITION) & (v2 < 0), 0.0, v2)
    return np.stack([p2, v2], axis=-1)


def mc_step(s: Sequence[float], a: float) -> MountainCarState:
    if not -1.0 <= a <= 1.0:
        raise InputError(f"force {a} outside [-1, 1]")
    p, v = mc_step_batch(np.asarray(s, dtype=float), np.float64(a))
    return MountainCarState(float(p), float(v))


def mc_is_terminal(states: np.ndarray) -> np.ndarray:
    return np.asarray(states, dtype=float)[..., 0] >= MC_GOAL_POSITION


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    terminated_at_goal: bool = False

    def __post_init__(self):
        self.states = np.asarray(self.states)
        self.actions = np.asarray(self.actions)
        if len(self.states) != len(self.actions) + 1:
            raise InputError("trajectory needs exactly one more state than actions")

    @property
    def length(self) -> int:
        return len(self.actions)

    def transitions(self) -> Transitions:
        return Transitions(self.states[:-1], self.actions, self.states[1:])


def mc_rollout(
    policy: Callable[[MountainCarState], float],
    n_episodes: int,
    max_steps: int = 500,
    seed: int = 0,
) -> list[Trajectory]:
    """Roll out ``policy`` from the standard start distribution."""
    if n_episodes < 0:
        raise InputError("n_episodes must be >= 0")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_episodes):
        s = MountainCarState(float(rng.uniform(*MC_START_RANGE)), 0.0)
        states, actions = [s], []
        done = False
        for _ in range(max_steps):
            a = float(np.clip(policy(s), -1.0, 1.0))
            s = mc_step(s, a)
            states.append(s)
            actions.append(a)
            if s.position >= MC_GOAL_POSITION:
                done = True
                break
        out.append(Trajectory(np.array(states, dtype=float), np.array(actions, dtype=float), done))
    return out


TRAJECTORY_CSV_HEADER = ["episode", "t", "position", "velocity", "action"]


def trajectories_to_csv(trajs: Sequence[Trajectory]) -> str:
    """One row per visited state; the final state of each episode has no action."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_CSV_HEADER)
    for ep, tr in enumerate(trajs):
        for t, (p, v) in enumerate(tr.states):
            act = repr(float(tr.actions[t])) if t < tr.length else ""
            w.writerow([ep, t, repr(float(p)), repr(float(v)), act])
    return buf.getvalue()


def trajectories_from_csv(text: str) -> list[Trajectory]:
    rows = list(csv.DictReader(io.StringIO(text)))
    episodes: dict[int, list[dict]] = {}
    for row in rows:
        episodes.setdefault(int(row["episode"]), []).append(row)
    out = []
    for ep in sorted(episodes):
        ep_rows = sorted(episodes[ep], key=lambda r: int(r["t"]))
        states = np.array([[float(r["position"]), float(r["velocity"])] for r in ep_rows])
        actions = np.array([float(r["action"]) for r in ep_rows[:-1]])
        out.append(Trajectory(states, actions, bool(states[-1, 0] >= MC_GOAL_POSITION)))
    return out


def grid_random_walks(spec: GridSpec, n: int, length: int, seed: int = 0) -> list[Trajectory]:
    """Uniform random-action walks from uniform random non-terminal starts.

    A walk ends early when it enters a terminal cell.
    """
    rng = np.random.default_rng(seed)
    table = next_state_table(spec)
    terminal = spec.terminal_mask()
    starts = np.flatnonzero(~terminal)
    if starts.size == 0:
        raise InputError("every cell is terminal")
    out = []
    for _ in range(n):
        s = int(rng.choice(starts))
        states, actions = [s], []
        for _ in range(length):
            a = int(rng.integers(N_GRID_ACTIONS))
            s = int(table[s, a])
            states.append(s)
            actions.append(a)
            if terminal[s]:
                break
        out.append(Trajectory(np.array(states, dtype=np.int64), np.array(actions, dtype=np.int64), bool(terminal[s])))
    return out

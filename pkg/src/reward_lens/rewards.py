"""Reward functions: ground truths, shaped and noisy variants, file I/O.

Every reward is a :class:`RewardSource`; the only thing the rest of the
package ever does with one is ``evaluate`` a batch of transitions.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path
from typing import Callable

import numpy as np

from .env import (
    MC_GOAL_POSITION,
    MC_MAX_POSITION,
    MC_MAX_SPEED,
    MC_MIN_POSITION,
    N_GRID_ACTIONS,
    GridAction,
    GridSpec,
    Transitions,
    enumerate_transitions,
    mc_is_terminal,
    mc_step_batch,
)
from .errors import ConvergenceError, InputError, RewardFileError, ValidationError
from .potentials import MC_FEATURE_SCALE, MC_TERMINAL, LinearPotential, MLPPotential

PATH_ON_REWARD = 1.0
PATH_OFF_REWARD = -0.2
RANDOM_SHAPING_SCALE = 5.0


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma < 1.0:
        raise InputError(f"discount must lie in [0, 1), got {gamma}")
    return gamma


class RewardSource:
    kind: str = ""

    def evaluate(self, batch: Transitions) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, batch: Transitions) -> np.ndarray:
        return self.evaluate(batch)


class TabularReward(RewardSource):
    """Dense ``(n_states, 5)`` table over the enumerated grid transitions."""

    kind = "tabular"

    def __init__(self, spec: GridSpec, values, gamma: float | None = None):
        self.spec = spec
        values = np.asarray(values, dtype=float)
        if values.size != spec.n_transitions:
            raise InputError(f"expected {spec.n_transitions} reward entries, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise InputError("reward table contains non-finite values")
        self.values = values.reshape(spec.n_states, N_GRID_ACTIONS).copy()
        self.gamma = gamma

    @property
    def flat(self) -> np.ndarray:
        """Values in enumeration order."""
        return self.values.reshape(-1)

    def evaluate(self, batch: Transitions) -> np.ndarray:
        return self.values[np.asarray(batch.s), np.asarray(batch.a)]

    def __eq__(self, other):
        return (
            isinstance(other, TabularReward)
            and other.spec.width == self.spec.width
            and other.spec.height == self.spec.height
            and np.array_equal(other.values, self.values)
        )


class FunctionReward(RewardSource):
    kind = "function"

    def __init__(self, fn: Callable[[Transitions], np.ndarray], kind: str = "function"):
        self.fn = fn
        self.kind = kind

    def evaluate(self, batch: Transitions) -> np.ndarray:
        return np.asarray(self.fn(batch), dtype=float)


def potential_values(phi, states) -> np.ndarray:
    """Evaluate a potential given either as a per-state table or a callable."""
    if callable(phi):
        return np.asarray(phi(states), dtype=float)
    return np.asarray(phi, dtype=float)[np.asarray(states)]


class ShapedReward(RewardSource):
    kind = "shaped"

    def __init__(self, base: RewardSource, potential, gamma: float):
        self.base = base
        self.potential = potential
        self.gamma = check_gamma(gamma)

    def shaping(self, batch: Transitions) -> np.ndarray:
        return self.gamma * potential_values(self.potential, batch.s_next) - potential_values(self.potential, batch.s)

    def evaluate(self, batch: Transitions) -> np.ndarray:
        return self.base.evaluate(batch) + self.shaping(batch)


def _gaussian_from_key(key: bytes) -> float:
    digest = hashlib.blake2b(key, digest_size=16).digest()
    u1 = (int.from_bytes(digest[:8], "little") + 1) / (2**64 + 1)
    u2 = int.from_bytes(digest[8:], "little") / 2**64
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


class NoisyReward(RewardSource):
    """Base reward plus i.i.d. Gaussian noise keyed on the transition itself.

    The noise for a transition depends only on ``(seed, s, a, s_next)``, so
    it is independent of query order; values are cached after first use.
    """

    kind = "noisy"

    def __init__(self, base: RewardSource, sigma: float, seed: int = 0):
        if sigma < 0:
            raise InputError("sigma must be >= 0")
        self.base = base
        self.sigma = float(sigma)
        self.seed = int(seed)
        self._cache: dict[bytes, float] = {}

    def _key(self, s, a, sn) -> bytes:
        parts = [np.asarray(x, dtype=float).tobytes() for x in (s, a, sn)]
        return self.seed.to_bytes(8, "little", signed=True) + b"|".join(parts)

    def noise(self, batch: Transitions) -> np.ndarray:
        out = np.empty(len(batch))
        for i in range(len(batch)):
            key = self._key(batch.s[i], batch.a[i], batch.s_next[i])
            z = self._cache.get(key)
            if z is None:
                z = self._cache[key] = _gaussian_from_key(key)
            out[i] = z
        return self.sigma * out

    def evaluate(self, batch: Transitions) -> np.ndarray:
        base = self.base.evaluate(batch)
        if self.sigma == 0.0:
            return base
        return base + self.noise(batch)


def to_tabular(r: RewardSource, spec: GridSpec, gamma: float | None = None) -> TabularReward:
    """Materialise any reward over the full grid enumeration."""
    if gamma is None:
        gamma = getattr(r, "gamma", None)
    return TabularReward(spec, r.evaluate(enumerate_transitions(spec)), gamma=gamma)


# --- gridworld ground truths and shapings ----------------------------------


def goal_reward(spec: GridSpec) -> TabularReward:
    """1 on every transition that lands on the goal cell, else 0."""
    t = enumerate_transitions(spec)
    return TabularReward(spec, (t.s_next == spec.index(spec.goal)).astype(float))


def path_cells(spec: GridSpec) -> list[tuple[int, int]]:
    """Staircase along the main diagonal: Right, Up, Right, Up, ... to the goal."""
    if spec.width != spec.height:
        raise InputError("path reward needs a square grid")
    cells = [(0, 0)]
    x = y = 0
    while (x, y) != (spec.width - 1, spec.height - 1):
        if x == y:
            x += 1
        else:
            y += 1
        cells.append((x, y))
    return cells


def path_reward(spec: GridSpec) -> TabularReward:
    cells = path_cells(spec)
    successor = {spec.index(a): spec.index(b) for a, b in zip(cells[:-1], cells[1:])}
    t = enumerate_transitions(spec)
    on_path = np.array([successor.get(int(s)) == int(sn) for s, sn in zip(t.s, t.s_next)])
    return TabularReward(spec, np.where(on_path, PATH_ON_REWARD, PATH_OFF_REWARD))


def manhattan_potential(spec: GridSpec, sign: int = 1) -> np.ndarray:
    if sign not in (1, -1):
        raise InputError("sign must be +1 or -1")
    gx, gy = spec.goal
    return np.array([sign * float(abs(x - gx) + abs(y - gy)) for x, y in spec.cells()])


def random_potential(spec: GridSpec, seed: int, scale: float = RANDOM_SHAPING_SCALE) -> np.ndarray:
    if scale <= 0:
        raise InputError("scale must be > 0")
    phi = np.random.default_rng(seed).uniform(0.0, scale, spec.n_states)
    phi[spec.terminal_mask()] = 0.0
    return phi


def apply_shaping(r: RewardSource, phi, gamma: float) -> ShapedReward:
    return ShapedReward(r, phi, gamma)


def add_noise(r: RewardSource, sigma: float, seed: int = 0) -> NoisyReward:
    return NoisyReward(r, sigma, seed)


# --- mountain car -----------------------------------------------------------


def mc_ground_truth() -> RewardSource:
    return FunctionReward(lambda b: mc_is_terminal(b.s_next).astype(float), kind="mc-parametric")


def mc_linear_potential(c_p: float, c_v: float) -> LinearPotential:
    """``c_p * position + c_v * velocity`` on raw states, zero at the goal."""
    return LinearPotential(2, terminal=MC_TERMINAL, params=[c_p, c_v])


def mc_random_potential(seed: int, hidden: int = 16, scale: float = 1.0) -> MLPPotential:
    """A random smooth potential: a small tanh MLP with every weight ~ U(-scale, scale)."""
    m = MLPPotential((2, hidden, 1), seed, MC_TERMINAL, MC_FEATURE_SCALE)
    rng = np.random.default_rng(seed + 1000)
    m.set_params(rng.uniform(-scale, scale, m.n_params))
    return m


def mc_learnedlike(base: RewardSource, gamma: float, sigma: float = 0.01, seed: int = 0) -> NoisyReward:
    """Stand-in for a learned reward model: random smooth shaping plus Gaussian noise.

    This imitates the two defects of a learned model (an arbitrary shaping
    term and per-transition error); it does not reproduce any training run.
    """
    return add_noise(apply_shaping(base, mc_random_potential(seed + 3), gamma), sigma, seed + 5)


class ValuePotential:
    """Bilinear interpolation of a value table on a (position, velocity) grid."""

    def __init__(self, positions: np.ndarray, velocities: np.ndarray, values: np.ndarray, residual: float, iterations: int):
        self.positions = positions
        self.velocities = velocities
        self.values = values
        self.residual = residual
        self.iterations = iterations

    def _corners(self, states: np.ndarray):
        states = np.asarray(states, dtype=float).reshape(-1, 2)
        n_p, n_v = len(self.positions), len(self.velocities)
        fp = (np.clip(states[:, 0], self.positions[0], self.positions[-1]) - self.positions[0]) / (
            self.positions[1] - self.positions[0]
        )
        fv = (np.clip(states[:, 1], self.velocities[0], self.velocities[-1]) - self.velocities[0]) / (
            self.velocities[1] - self.velocities[0]
        )
        i = np.clip(np.floor(fp).astype(np.int64), 0, n_p - 2)
        j = np.clip(np.floor(fv).astype(np.int64), 0, n_v - 2)
        wp, wv = fp - i, fv - j
        idx = np.stack([i * n_v + j, i * n_v + j + 1, (i + 1) * n_v + j, (i + 1) * n_v + j + 1], axis=1)
        w = np.stack([(1 - wp) * (1 - wv), (1 - wp) * wv, wp * (1 - wv), wp * wv], axis=1)
        return idx, w

    def __call__(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float).reshape(-1, 2)
        idx, w = self._corners(states)
        v = np.sum(self.values.reshape(-1)[idx] * w, axis=1)
        return np.where(mc_is_terminal(states), 0.0, v)


def mc_value_potential(
    gamma: float,
    grid_resolution: int = 64,
    tol: float = 1e-6,
    max_iterations: int = 100_000,
    forces=(-1.0, 0.0, 1.0),
) -> ValuePotential:
    """Optimal state values of the goal reward by value iteration on a grid.

    Successor values are read off the grid by bilinear interpolation; goal
    states have value zero.
    """
    gamma = check_gamma(gamma)
    if grid_resolution < 32:
        raise InputError("grid_resolution must be >= 32")
    n = int(grid_resolution)
    positions = np.linspace(MC_MIN_POSITION, MC_MAX_POSITION, n)
    velocities = np.linspace(-MC_MAX_SPEED, MC_MAX_SPEED, n)
    pp, vv = np.meshgrid(positions, velocities, indexing="ij")
    nodes = np.stack([pp.ravel(), vv.ravel()], axis=1)
    terminal = mc_is_terminal(nodes)
    proto = ValuePotential(positions, velocities, np.zeros((n, n)), np.inf, 0)
    rewards, corner_idx, corner_w, cont = [], [], [], []
    for f in forces:
        nxt = mc_step_batch(nodes, np.full(len(nodes), float(f)))
        idx, w = proto._corners(nxt)
        rewards.append(mc_is_terminal(nxt).astype(float))
        corner_idx.append(idx)
        corner_w.append(w)
        cont.append(~mc_is_terminal(nxt))
    # Goal nodes hold the entry reward rather than 0: they only matter when
    # interpolating at non-goal states next to the boundary, where the true
    # value approaches 1, and the potential itself is masked to 0 on goals.
    values = np.where(terminal, 1.0, 0.0)
    for it in range(1, max_iterations + 1):
        q = np.stack(
            [r + gamma * c * np.sum(values[idx] * w, axis=1) for r, idx, w, c in zip(rewards, corner_idx, corner_w, cont)]
        )
        new = np.where(terminal, 1.0, q.max(axis=0))
        residual = float(np.max(np.abs(new - values)))
        values = new
        if residual < tol:
            return ValuePotential(positions, velocities, values.reshape(n, n), residual, it)
    raise ConvergenceError(f"value iteration did not reach residual {tol} in {max_iterations} iterations (last {residual:.3g})")


# --- tabular reward files ---------------------------------------------------

_ENTRY_RE = re.compile(r"^\s*\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,")


def tabular_to_json(r: TabularReward) -> str:
    spec = r.spec
    head = {
        "width": spec.width,
        "height": spec.height,
        "gamma": r.gamma,
        "goal": list(spec.goal),
        "terminal_cells": sorted(list(c) for c in spec.terminal_cells),
    }
    lines = ["{"]
    for k, v in head.items():
        lines.append(f" {json.dumps(k)}: {json.dumps(v)},")
    lines.append(' "entries": [')
    t = enumerate_transitions(spec)
    rows = [f"  [{int(s)}, {int(a)}, {int(sn)}, {float(v)!r}]" for s, a, sn, v in zip(t.s, t.a, t.s_next, r.flat)]
    lines.append(",\n".join(rows))
    lines.append(" ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_tabular(r: TabularReward, path) -> None:
    Path(path).write_text(tabular_to_json(r))


def tabular_from_json(text: str) -> TabularReward:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RewardFileError(exc.msg, exc.lineno) from exc
    entry_lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _ENTRY_RE.match(line)
        if m:
            entry_lines.setdefault((int(m.group(1)), int(m.group(2))), lineno)
    try:
        spec = GridSpec(
            int(d["width"]),
            int(d["height"]),
            goal=tuple(d["goal"]) if d.get("goal") is not None else None,
            terminal_cells=frozenset(tuple(c) for c in d.get("terminal_cells") or ()),
        )
        entries = d["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise RewardFileError(f"bad header: {exc}", 1) from exc
    expected = enumerate_transitions(spec)
    values = np.full((spec.n_states, N_GRID_ACTIONS), np.nan)
    seen = np.zeros_like(values, dtype=bool)
    for k, e in enumerate(entries):
        line = None
        if isinstance(e, list) and len(e) >= 2:
            line = entry_lines.get((e[0], e[1])) if all(isinstance(x, int) for x in e[:2]) else None
        if not (isinstance(e, list) and len(e) == 4):
            raise RewardFileError(f"entry {k} must be [s, a, s_next, value]", line)
        s, a, sn, v = e
        if not (isinstance(s, int) and isinstance(a, int) and isinstance(sn, int)):
            raise RewardFileError(f"entry {k} has non-integer indices", line)
        if not (0 <= s < spec.n_states and 0 <= a < N_GRID_ACTIONS):
            raise RewardFileError(f"entry {k} index out of range", line)
        if sn != expected.s_next[s * N_GRID_ACTIONS + a]:
            raise RewardFileError(f"entry {k}: s_next {sn} inconsistent with dynamics", line)
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError(f"entry {k} has non-finite value {v!r}", line)
        if seen[s, a]:
            raise RewardFileError(f"duplicate entry for state {s} action {GridAction(a).name}", line)
        seen[s, a] = True
        values[s, a] = float(v)
    if not seen.all():
        s, a = map(int, np.argwhere(~seen)[0])
        last = max(entry_lines.values(), default=None)
        raise RewardFileError(
            f"missing {int((~seen).sum())} transition rows, first: state {s} action {GridAction(a).name}", last
        )
    gamma = d.get("gamma")
    return TabularReward(spec, values, gamma=None if gamma is None else float(gamma))


def load_tabular(path) -> TabularReward:
    return tabular_from_json(Path(path).read_text())

"""Independent reference implementations used to check the package.

Plain Python loops and an LP solver; nothing here imports the code under test
except for data containers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

MOVES = [(0, 0), (0, 1), (0, -1), (-1, 0), (1, 0)]  # Stay, Up, Down, Left, Right


def step(w: int, h: int, x: int, y: int, a: int) -> tuple[int, int]:
    dx, dy = MOVES[a]
    nx, ny = x + dx, y + dy
    if 0 <= nx < w and 0 <= ny < h:
        return nx, ny
    return x, y


def transitions(w: int, h: int) -> list[tuple[int, int, int]]:
    out = []
    for y in range(h):
        for x in range(w):
            for a in range(5):
                nx, ny = step(w, h, x, y, a)
                out.append((y * w + x, a, ny * w + nx))
    return out


def f(kind: str, x: float) -> float:
    return abs(x) if kind == "l1" else math.log1p(abs(x))


def sparsity(values, kind: str) -> float:
    return math.fsum(f(kind, v) for v in values) / len(values)


def smoothness_pairs(w: int, h: int, table) -> list[tuple[float, float]]:
    """Reward values of every chained pair (s,a,s'),(s',a',s'') on the grid."""
    pairs = []
    for s, a, sn in transitions(w, h):
        x, y = sn % w, sn // w
        for a2 in range(5):
            nx, ny = step(w, h, x, y, a2)
            pairs.append((table[s][a], table[sn][a2]))
    return pairs


def goal_values(w: int, h: int, goal_index: int) -> list[list[float]]:
    table = [[0.0] * 5 for _ in range(w * h)]
    for s, a, sn in transitions(w, h):
        if sn == goal_index:
            table[s][a] = 1.0
    return table


def value_iteration(w, h, table, gamma, terminal=(), tol=1e-13):
    """Dictionary-free but loop-based Q iteration; terminal states have V = 0."""
    n = w * h
    v = [0.0] * n
    nxt = {(s, a): sn for s, a, sn in transitions(w, h)}
    while True:
        new = []
        for s in range(n):
            if s in terminal:
                new.append(0.0)
            else:
                new.append(max(table[s][a] + gamma * v[nxt[s, a]] for a in range(5)))
        delta = max(abs(p - q) for p, q in zip(new, v))
        v = new
        if delta < tol:
            break
    return [[table[s][a] + gamma * v[nxt[s, a]] for a in range(5)] for s in range(n)]


def shaping_lp(w: int, h: int, r_flat, gamma: float, pinned=()) -> float:
    """min over psi of mean_t |r(t) + gamma psi(s') - psi(s)|, psi = 0 on ``pinned``."""
    ts = transitions(w, h)
    n, m = w * h, len(ts)
    # variables: psi (n), slack u (m); minimise sum u subject to |r + A psi| <= u
    a = np.zeros((m, n))
    for i, (s, _, sn) in enumerate(ts):
        a[i, sn] += gamma
        a[i, s] -= 1.0
    r = np.asarray(r_flat, dtype=float)
    eye = np.eye(m)
    a_ub = np.block([[a, -eye], [-a, -eye]])
    b_ub = np.concatenate([-r, r])
    c = np.concatenate([np.zeros(n), np.ones(m)])
    bounds = [(0.0, 0.0) if i in pinned else (None, None) for i in range(n)] + [(0, None)] * m
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return res.fun / m


def central_difference(fn, x: np.ndarray, i: int, h: float = 1e-5) -> float:
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (fn(xp) - fn(xm)) / (2 * h)


def mc_step(p: float, v: float, force: float) -> tuple[float, float]:
    v = min(max(v + 0.0015 * force - 0.0025 * math.cos(3 * p), -0.07), 0.07)
    p = min(max(p + v, -1.2), 0.6)
    if p == -1.2 and v < 0:
        v = 0.0
    return p, v

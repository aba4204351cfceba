"""Search the potential-shaping class for a minimum-cost equivalent reward.

The base reward is only ever evaluated, never differentiated: its values on
the support of the cost distribution are computed once up front, and the
gradient flows through the shaping term ``gamma * Phi(s') - Phi(s)`` alone.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .costs import CostSpec, epoch_batches, penalty_array
from .env import TransitionPairs, Transitions
from .errors import DivergenceError, InputError
from .potentials import PotentialModel
from .rewards import RewardSource, ShapedReward, check_gamma


@dataclass
class OptimizeConfig:
    steps: int = 10_000
    learning_rate: float = 0.3
    optimizer: str = "adam"
    batch_size: int | None = None  # None: whole support every step
    seed: int = 0
    log_every: int = 1
    lr_schedule: str = "cosine"  # or "constant"
    early_stop_window: int = 200
    early_stop_tol: float | None = None  # e.g. 1e-6 to enable
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 1:
            raise InputError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InputError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.log_every < 1:
            raise InputError("log_every must be >= 1")

    def lr_at(self, step: int) -> float:
        if self.lr_schedule == "constant":
            return self.learning_rate
        return 0.5 * self.learning_rate * (1.0 + math.cos(math.pi * step / self.steps))


# Hyperparameters per potential kind; tabular runs are full-batch.
PRESETS = {
    "tabular": {},
    "linear": {"steps": 5000, "learning_rate": 0.05, "batch_size": 256},
    "mlp": {"steps": 20_000, "learning_rate": 1e-3, "batch_size": 256, "log_every": 100},
}


def default_config(kind: str, **overrides) -> OptimizeConfig:
    if kind not in PRESETS:
        raise InputError(f"unknown potential kind {kind!r}")
    return OptimizeConfig(**{**PRESETS[kind], **overrides})


class SGD:
    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if params.shape != grad.shape:
            raise InputError(f"shape mismatch: params {params.shape} vs grad {grad.shape}")
        return params - lr * grad


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if params.shape != grad.shape:
            raise InputError(f"shape mismatch: params {params.shape} vs grad {grad.shape}")
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: OptimizeConfig):
    if cfg.optimizer == "sgd":
        return SGD()
    return Adam(cfg.beta1, cfg.beta2, cfg.eps)


def step(opt, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    return opt.step(params, grad, lr)


# --- objective ----------------------------------------------------------------


class Objective:
    """Cost of the shaped reward and its gradient w.r.t. potential params.

    Base reward values are evaluated once for the whole support; batches are
    index arrays into it.
    """

    def __init__(self, r: RewardSource, gamma: float, cost: CostSpec):
        self.gamma = check_gamma(gamma)
        self.family = cost.family
        self.penalty = cost.penalty
        self.items = cost.support()
        if self.family == "sparse":
            self.base = (np.asarray(r.evaluate(self.items), dtype=float),)
            self.parts: tuple[Transitions, ...] = (self.items,)
        else:
            assert isinstance(self.items, TransitionPairs)
            self.parts = (self.items.first, self.items.second)
            self.base = tuple(np.asarray(r.evaluate(p), dtype=float) for p in self.parts)

    def __len__(self) -> int:
        return len(self.items)

    def _states(self, idx):
        parts = [p if idx is None else p.take(idx) for p in self.parts]
        return parts

    def shaped_parts(self, model: PotentialModel, idx=None) -> list[np.ndarray]:
        out = []
        for part, base in zip(self._states(idx), self.base):
            b = base if idx is None else base[idx]
            out.append(b + self.gamma * model(part.s_next) - model(part.s))
        return out

    def arguments(self, model: PotentialModel, idx=None) -> np.ndarray:
        """Values fed into the penalty: rewards (sparse) or differences (smooth)."""
        vals = self.shaped_parts(model, idx)
        return vals[0] if self.family == "sparse" else vals[0] - vals[1]

    def cost(self, model: PotentialModel, idx=None) -> float:
        f, _ = penalty_array(self.penalty, self.arguments(model, idx))
        return float(np.mean(f))

    def cost_and_grad(self, model: PotentialModel, idx=None) -> tuple[float, np.ndarray]:
        parts = self._states(idx)
        bases = [b if idx is None else b[idx] for b in self.base]
        n = len(parts[0])
        # one pass over [s'_1, s_1, s'_2, s_2, ...]
        values, cache = model.forward(np.concatenate([x for p in parts for x in (p.s_next, p.s)]))
        shaped = [
            b + self.gamma * values[2 * i * n : (2 * i + 1) * n] - values[(2 * i + 1) * n : (2 * i + 2) * n]
            for i, b in enumerate(bases)
        ]
        x = shaped[0] if self.family == "sparse" else shaped[0] - shaped[1]
        f, df = penalty_array(self.penalty, x)
        upstream = df / n
        # d r'(t) / d theta = gamma * dPhi(s') - dPhi(s); the smooth family
        # sends +upstream to the first member and -upstream to the second.
        signs = (1.0,) if self.family == "sparse" else (1.0, -1.0)
        weights = [w for sign in signs for w in (sign * self.gamma * upstream, -sign * upstream)]
        grad = model.backward(cache, np.concatenate(weights))
        return float(np.mean(f)), grad


@dataclass
class PreprocessResult:
    potential: PotentialModel
    preprocessed: ShapedReward
    cost_trace: list[tuple[int, float]]
    final_cost: float
    initial_cost: float = float("nan")
    steps_run: int = 0
    stopped_early: bool = False

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "cost"])
        for k, c in self.cost_trace:
            w.writerow([k, repr(float(c))])
        return buf.getvalue()


# overflow is caught by the finiteness checks and reported as DivergenceError
@np.errstate(over="ignore", invalid="ignore")
def preprocess(
    r: RewardSource,
    m: PotentialModel,
    gamma: float,
    cost: CostSpec,
    cfg: OptimizeConfig | None = None,
) -> PreprocessResult:
    """Minimise the cost of ``r + gamma * Phi(s') - Phi(s)`` over the params of ``m``.

    ``m`` is left untouched; the trained potential is a copy holding the
    lowest-cost parameters seen (on the full support) during the run.  The
    run stops early when that best cost improves by less than
    ``early_stop_tol`` over ``early_stop_window`` steps.
    """
    cfg = cfg or OptimizeConfig()
    model = copy.deepcopy(m)
    obj = Objective(r, gamma, cost)
    full_batch = cfg.batch_size is None or cfg.batch_size >= len(obj)
    batches = None if full_batch else epoch_batches(len(obj), cfg.batch_size, cfg.seed)
    opt = make_optimizer(cfg)

    trace: list[tuple[int, float]] = []
    best_history: dict[int, float] = {}
    initial = obj.cost(model)
    if not math.isfinite(initial):
        raise DivergenceError(0)
    best_cost, best_params = initial, model.params.copy()
    stopped = False
    w = cfg.early_stop_window
    k = 0
    for k in range(cfg.steps):
        idx = None if full_batch else next(batches)
        j, grad = obj.cost_and_grad(model, idx)
        if not math.isfinite(j):
            raise DivergenceError(k)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(k, "gradient")
        check_stop = cfg.early_stop_tol is not None and k % w == 0
        if k % cfg.log_every == 0 or check_stop:
            full = j if full_batch else obj.cost(model)
            if full < best_cost:
                best_cost, best_params = full, model.params.copy()
            if k % cfg.log_every == 0:
                trace.append((k, full))
            if check_stop:
                best_history[k] = best_cost
                if k >= w and best_history[k - w] - best_cost < cfg.early_stop_tol:
                    stopped = True
                    break
        model.set_params(opt.step(model.params, grad, cfg.lr_at(k)))
    else:
        k = cfg.steps
    final = obj.cost(model)
    if not math.isfinite(final):
        raise DivergenceError(k)
    if not trace or trace[-1][0] != k:
        trace.append((k, final))
    if best_cost < final:
        model.set_params(best_params)
        final = best_cost
    return PreprocessResult(
        potential=model,
        preprocessed=ShapedReward(r, model, gamma),
        cost_trace=trace,
        final_cost=final,
        initial_cost=initial,
        steps_run=k,
        stopped_early=stopped,
    )


def finite_difference_audit(
    r: RewardSource,
    m: PotentialModel,
    gamma: float,
    cost: CostSpec,
    n_probes: int = 100,
    seed: int = 0,
    h: float = 1e-5,
    abs_floor: float = 1e-8,
) -> float:
    """Max relative error between the assembled gradient and central differences.

    Probes are random parameter coordinates.  A coordinate whose +-h
    perturbation moves any penalty argument across zero straddles a kink of
    the penalty and is redrawn.  Relative error is
    ``|a - b| / max(|a|, |b|, abs_floor)``.
    """
    if n_probes < 1:
        raise InputError("n_probes must be >= 1")
    obj = Objective(r, gamma, cost)
    model = copy.deepcopy(m)
    theta = model.params.copy()
    _, grad = obj.cost_and_grad(model)
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    attempts = 0
    while done < n_probes:
        attempts += 1
        if attempts > 50 * n_probes:
            raise InputError("could not find enough kink-free probe coordinates")
        i = int(rng.integers(model.n_params))
        plus, minus = theta.copy(), theta.copy()
        plus[i] += h
        minus[i] -= h
        model.set_params(plus)
        x_plus = obj.arguments(model)
        j_plus = float(np.mean(penalty_array(obj.penalty, x_plus)[0]))
        model.set_params(minus)
        x_minus = obj.arguments(model)
        j_minus = float(np.mean(penalty_array(obj.penalty, x_minus)[0]))
        if np.any(np.sign(x_plus) != np.sign(x_minus)):
            continue
        fd = (j_plus - j_minus) / (2 * h)
        err = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), abs_floor)
        worst = max(worst, err)
        done += 1
    return worst

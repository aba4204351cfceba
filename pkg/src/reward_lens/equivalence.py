"""Certify that two rewards differ only by potential shaping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import GridAction, GridSpec, Trajectory, enumerate_transitions
from .errors import InputError
from .policy import greedy_policy, value_iteration
from .rewards import RewardSource, TabularReward, check_gamma, potential_values, to_tabular

POLICY_THRESHOLD = 1e-12
TIE_TOL = 1e-9


def _check_pair(r: TabularReward, r_prime: TabularReward) -> None:
    if (r.spec.width, r.spec.height) != (r_prime.spec.width, r_prime.spec.height):
        raise InputError("rewards are defined on different grids")


def recover_potential(r: TabularReward, r_prime: TabularReward, gamma: float, method: str = "self_loop") -> np.ndarray:
    """Potential ``Phi`` with ``r' - r = gamma * Phi(s') - Phi(s)``, if one exists.

    ``self_loop`` reads it off the Stay transitions in closed form;
    ``lstsq`` fits it over the whole transition graph and works without
    self-loops.
    """
    if gamma == 1.0:
        raise InputError("gamma = 1 is unsupported: the self-loop closed form divides by gamma - 1")
    gamma = check_gamma(gamma)
    _check_pair(r, r_prime)
    delta = r_prime.values - r.values
    if method == "self_loop":
        return delta[:, GridAction.STAY] / (gamma - 1.0) + 0.0  # no -0.0 in reports
    if method == "lstsq":
        t = enumerate_transitions(r.spec)
        a = np.zeros((len(t), r.spec.n_states))
        np.add.at(a, (np.arange(len(t)), t.s_next), gamma)
        np.add.at(a, (np.arange(len(t)), t.s), -1.0)
        phi, *_ = np.linalg.lstsq(a, delta.reshape(-1), rcond=None)
        return phi
    raise InputError(f"unknown recovery method {method!r}")


def shaping_residuals(r: TabularReward, r_prime: TabularReward, gamma: float, phi: np.ndarray) -> np.ndarray:
    t = enumerate_transitions(r.spec)
    delta = (r_prime.values - r.values).reshape(-1)
    return np.abs(delta - (gamma * phi[t.s_next] - phi[t.s]))


def check_shaping_equiv(
    r: TabularReward, r_prime: TabularReward, gamma: float, tol: float = 1e-6, method: str = "self_loop"
) -> tuple[bool, float]:
    phi = recover_potential(r, r_prime, gamma, method)
    residual = float(shaping_residuals(r, r_prime, gamma, phi).max())
    return residual <= tol, residual


def discounted_return(rewards: np.ndarray, gamma: float) -> float:
    rewards = np.asarray(rewards, dtype=float)
    return float(np.sum(rewards * gamma ** np.arange(len(rewards))))


def return_invariance_check(
    r: RewardSource,
    r_prime: RewardSource,
    trajectories: Sequence[Trajectory],
    gamma: float,
    potential=None,
) -> float:
    """Max over trajectories of ``|(G' - G) - (gamma^T Phi(s_T) - Phi(s_0))|``.

    ``potential`` may be a table or a callable; when omitted it is recovered
    from the two (tabular) rewards.
    """
    gamma = check_gamma(gamma)
    if potential is None:
        if not (isinstance(r, TabularReward) and isinstance(r_prime, TabularReward)):
            raise InputError("a potential is required for non-tabular rewards")
        potential = recover_potential(r, r_prime, gamma)
    worst = 0.0
    for tr in trajectories:
        if tr.length == 0:
            continue
        batch = tr.transitions()
        g = discounted_return(r.evaluate(batch), gamma)
        g_prime = discounted_return(r_prime.evaluate(batch), gamma)
        ends = potential_values(potential, tr.states[[0, -1]])
        expected = gamma**tr.length * ends[1] - ends[0]
        worst = max(worst, abs((g_prime - g) - expected))
    return worst


def optimal_policy_check(
    r: RewardSource,
    r_prime: RewardSource,
    spec: GridSpec,
    gamma: float,
    threshold: float = POLICY_THRESHOLD,
    tie_tol: float = TIE_TOL,
) -> tuple[bool, float]:
    """Compare greedy action sets under both rewards.

    Returns ``(match, q_gap)`` where ``q_gap = max |Q'(s, a) - Q(s, a) + Phi(s)|``
    with ``Phi`` recovered from the Stay transitions.
    """
    q = value_iteration(spec, r, gamma, threshold)
    q_prime = value_iteration(spec, r_prime, gamma, threshold)
    match = greedy_policy(q, tie_tol) == greedy_policy(q_prime, tie_tol)
    phi = recover_potential(to_tabular(r, spec), to_tabular(r_prime, spec), gamma)
    q_gap = float(np.max(np.abs(q_prime.values - q.values + phi[:, None])))
    return match, q_gap


@dataclass
class EquivalenceReport:
    recovered_potential: np.ndarray
    max_residual: float
    is_equivalent: bool
    tol: float
    gamma: float
    return_invariance_max_error: float | None = None
    policy_match: bool | None = None
    q_gap: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.is_equivalent and self.policy_match is not False

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "tol": self.tol,
            "is_equivalent": self.is_equivalent,
            "max_residual": self.max_residual,
            "return_invariance_max_error": self.return_invariance_max_error,
            "policy_match": self.policy_match,
            "q_gap": self.q_gap,
            "recovered_potential": [float(v) for v in self.recovered_potential],
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def equivalence_report(
    r: TabularReward,
    r_prime: TabularReward,
    gamma: float,
    tol: float = 1e-6,
    trajectories: Sequence[Trajectory] | None = None,
    check_policy: bool = True,
) -> EquivalenceReport:
    phi = recover_potential(r, r_prime, gamma)
    residual = float(shaping_residuals(r, r_prime, gamma, phi).max())
    report = EquivalenceReport(phi, residual, residual <= tol, tol, gamma)
    if trajectories:
        report.return_invariance_max_error = return_invariance_check(r, r_prime, trajectories, gamma, phi)
    if check_policy:
        report.policy_match, report.q_gap = optimal_policy_check(r, r_prime, r.spec, gamma)
    return report

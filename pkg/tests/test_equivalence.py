from __future__ import annotations

import json

import numpy as np
import pytest

from reward_lens.env import GridAction, grid_random_walks
from reward_lens.equivalence import (
    check_shaping_equiv,
    discounted_return,
    equivalence_report,
    optimal_policy_check,
    recover_potential,
    return_invariance_check,
)
from reward_lens.errors import InputError
from reward_lens.rewards import (
    TabularReward,
    add_noise,
    apply_shaping,
    goal_reward,
    manhattan_potential,
    path_reward,
    random_potential,
    to_tabular,
)

GAMMA = 0.99


def shaped(spec, phi):
    return to_tabular(apply_shaping(goal_reward(spec), phi, GAMMA), spec)


class TestRecovery:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_recovers_random_potential(self, goal_spec, seed):
        phi = random_potential(goal_spec, seed)
        got = recover_potential(goal_reward(goal_spec), shaped(goal_spec, phi), GAMMA)
        assert np.allclose(got, phi, atol=1e-10)

    def test_constant_offset(self, open_spec):
        r = path_reward(open_spec)
        c = 3.0
        r2 = TabularReward(open_spec, r.values + (GAMMA - 1) * c)
        ok, res = check_shaping_equiv(r, r2, GAMMA)
        assert ok and res < 1e-12
        assert np.allclose(recover_potential(r, r2, GAMMA), c)

    def test_lstsq_agrees(self, goal_spec):
        phi = manhattan_potential(goal_spec, -1)
        r2 = shaped(goal_spec, phi)
        a = recover_potential(goal_reward(goal_spec), r2, GAMMA, "lstsq")
        assert np.allclose(a, phi, atol=1e-8)
        assert check_shaping_equiv(goal_reward(goal_spec), r2, GAMMA, method="lstsq")[0]

    def test_gamma_one(self, goal_spec):
        r = goal_reward(goal_spec)
        with pytest.raises(InputError):
            recover_potential(r, r, 1.0)

    def test_unknown_method(self, goal_spec):
        r = goal_reward(goal_spec)
        with pytest.raises(InputError):
            recover_potential(r, r, GAMMA, "svd")

    def test_grid_mismatch(self, goal_spec):
        from reward_lens.env import GridSpec

        small = GridSpec(3, 3)
        with pytest.raises(InputError):
            recover_potential(goal_reward(goal_spec), TabularReward(small, np.zeros((9, 5))), GAMMA)


class TestNonEquivalent:
    def test_single_bump(self, goal_spec):
        r = goal_reward(goal_spec)
        v = r.values.copy()
        v[goal_spec.index((4, 4)), GridAction.LEFT] += 0.5
        ok, res = check_shaping_equiv(r, TabularReward(goal_spec, v), GAMMA)
        assert not ok and res >= 0.5 - 1e-12

    def test_noise(self, goal_spec):
        noisy = to_tabular(add_noise(goal_reward(goal_spec), 0.1, 0), goal_spec)
        assert not check_shaping_equiv(goal_reward(goal_spec), noisy, GAMMA)[0]

    def test_goal_vs_path_policies_differ(self, goal_spec):
        match, _ = optimal_policy_check(goal_reward(goal_spec), path_reward(goal_spec), goal_spec, GAMMA)
        assert not match


class TestReturns:
    def test_discounted_return(self):
        assert discounted_return([1.0, 1.0, 1.0], 0.5) == 1.75
        assert discounted_return([], GAMMA) == 0.0

    def test_invariance_on_walks(self, goal_spec):
        phi = random_potential(goal_spec, 4)
        walks = grid_random_walks(goal_spec, 50, 30, seed=1)
        err = return_invariance_check(goal_reward(goal_spec), shaped(goal_spec, phi), walks, GAMMA)
        assert err < 1e-9

    def test_callable_potential(self, goal_spec):
        phi = random_potential(goal_spec, 4)
        walks = grid_random_walks(goal_spec, 10, 20, seed=2)
        err = return_invariance_check(
            goal_reward(goal_spec), apply_shaping(goal_reward(goal_spec), phi, GAMMA), walks, GAMMA, lambda s: phi[np.asarray(s, dtype=int)]
        )
        assert err < 1e-9

    def test_potential_required_for_functions(self, goal_spec):
        r = apply_shaping(goal_reward(goal_spec), manhattan_potential(goal_spec), GAMMA)
        with pytest.raises(InputError):
            return_invariance_check(r, r, grid_random_walks(goal_spec, 1, 3), GAMMA)


class TestReport:
    def test_passing_report(self, goal_spec):
        rep = equivalence_report(goal_reward(goal_spec), shaped(goal_spec, manhattan_potential(goal_spec)), GAMMA, trajectories=grid_random_walks(goal_spec, 5, 10))
        assert rep.passed and rep.policy_match and rep.q_gap < 1e-8
        d = json.loads(rep.to_json())
        assert d["is_equivalent"] is True and len(d["recovered_potential"]) == 100
        assert d["return_invariance_max_error"] < 1e-9

    def test_failing_report(self, goal_spec):
        rep = equivalence_report(goal_reward(goal_spec), path_reward(goal_spec), GAMMA)
        assert not rep.passed and rep.max_residual > 0.1

    def test_policy_optional(self, goal_spec):
        rep = equivalence_report(goal_reward(goal_spec), goal_reward(goal_spec), GAMMA, check_policy=False)
        assert rep.policy_match is None and rep.passed

from __future__ import annotations

import json

import numpy as np
import pytest

import oracles
from reward_lens.env import GridAction, GridSpec, Transitions, enumerate_transitions, mc_rollout
from reward_lens.errors import ConvergenceError, InputError, RewardFileError, ValidationError
from reward_lens.policy import mc_expert
from reward_lens.rewards import (
    PATH_OFF_REWARD,
    PATH_ON_REWARD,
    NoisyReward,
    add_noise,
    apply_shaping,
    check_gamma,
    goal_reward,
    load_tabular,
    manhattan_potential,
    mc_ground_truth,
    mc_learnedlike,
    mc_linear_potential,
    mc_value_potential,
    path_cells,
    path_reward,
    random_potential,
    save_tabular,
    tabular_from_json,
    tabular_to_json,
    to_tabular,
)

GAMMA = 0.99


def one(spec: GridSpec, s, a, sn) -> Transitions:
    return Transitions(np.array([spec.index(s)]), np.array([int(a)]), np.array([spec.index(sn)]))


class TestGamma:
    @pytest.mark.parametrize("g", [-0.1, 1.0, 1.5])
    def test_out_of_range(self, g):
        with pytest.raises(InputError):
            check_gamma(g)

    def test_zero_allowed(self):
        assert check_gamma(0) == 0.0


class TestGoalReward:
    def test_entering_goal(self, goal_spec):
        r = goal_reward(goal_spec)
        assert r.evaluate(one(goal_spec, (8, 9), GridAction.RIGHT, (9, 9)))[0] == 1.0
        assert r.evaluate(one(goal_spec, (0, 0), GridAction.STAY, (0, 0)))[0] == 0.0

    def test_matches_enumeration_oracle(self, goal_spec):
        want = oracles.goal_values(10, 10, 99)
        assert np.array_equal(goal_reward(goal_spec).values, np.array(want))
        assert goal_reward(goal_spec).flat.sum() == 5


class TestPathReward:
    def test_staircase_starts_right(self, open_spec):
        cells = path_cells(open_spec)
        assert cells[:4] == [(0, 0), (1, 0), (1, 1), (2, 1)]
        assert cells[-1] == (9, 9) and len(cells) == 19

    def test_values(self, open_spec):
        r = path_reward(open_spec)
        assert r.evaluate(one(open_spec, (0, 0), GridAction.UP, (0, 1)))[0] == PATH_OFF_REWARD
        assert r.evaluate(one(open_spec, (0, 0), GridAction.RIGHT, (1, 0)))[0] == PATH_ON_REWARD

    def test_dense_with_one_reward_per_path_step(self, open_spec):
        r = path_reward(open_spec)
        assert np.count_nonzero(r.flat) == 500
        assert np.sum(r.flat == PATH_ON_REWARD) == 18

    def test_square_only(self):
        with pytest.raises(InputError):
            path_reward(GridSpec(4, 3))


class TestPotentials:
    def test_manhattan(self, goal_spec):
        phi = manhattan_potential(goal_spec, 1)
        assert phi[goal_spec.index((9, 9))] == 0
        assert phi[goal_spec.index((0, 0))] == 18
        assert manhattan_potential(goal_spec, -1)[goal_spec.index((0, 9))] == -9

    def test_random(self, goal_spec):
        a = random_potential(goal_spec, 4, 5.0)
        assert np.array_equal(a, random_potential(goal_spec, 4, 5.0))
        assert a[goal_spec.index((9, 9))] == 0
        assert np.all((a >= 0) & (a <= 5.0))

    def test_random_scale_positive(self, goal_spec):
        with pytest.raises(InputError):
            random_potential(goal_spec, 0, 0.0)


class TestShaping:
    def test_zero_potential_is_identity(self, goal_spec):
        r = goal_reward(goal_spec)
        t = enumerate_transitions(goal_spec)
        assert np.array_equal(apply_shaping(r, np.zeros(100), GAMMA).evaluate(t), r.evaluate(t))

    def test_manhattan_self_loop(self, goal_spec):
        sh = apply_shaping(goal_reward(goal_spec), manhattan_potential(goal_spec), GAMMA)
        got = sh.evaluate(one(goal_spec, (5, 5), GridAction.STAY, (5, 5)))[0]
        assert got == pytest.approx((GAMMA - 1) * 8, abs=1e-14)

    def test_unshaping_recovers(self, goal_spec):
        r = goal_reward(goal_spec)
        phi = random_potential(goal_spec, 2)
        back = apply_shaping(apply_shaping(r, phi, GAMMA), -phi, GAMMA)
        t = enumerate_transitions(goal_spec)
        assert np.max(np.abs(back.evaluate(t) - r.evaluate(t))) < 1e-12

    def test_callable_potential(self):
        gt = mc_ground_truth()
        phi = mc_linear_potential(2.0, 0.0)
        t = Transitions(np.array([[0.1, 0.0]]), np.array([0.0]), np.array([[0.2, 0.0]]))
        assert apply_shaping(gt, phi, GAMMA).evaluate(t)[0] == pytest.approx(GAMMA * 0.4 - 0.2)


class TestNoise:
    def test_sigma_zero_identity(self, goal_spec):
        r = goal_reward(goal_spec)
        t = enumerate_transitions(goal_spec)
        assert np.array_equal(add_noise(r, 0.0, 1).evaluate(t), r.evaluate(t))

    def test_memoised_and_order_free(self, goal_spec):
        noisy = add_noise(goal_reward(goal_spec), 0.1, 3)
        t = enumerate_transitions(goal_spec)
        a = noisy.evaluate(t)
        perm = np.random.default_rng(0).permutation(len(t))
        fresh = add_noise(goal_reward(goal_spec), 0.1, 3)
        assert np.array_equal(fresh.evaluate(t.take(perm)), a[perm])
        assert np.array_equal(noisy.evaluate(t), a)

    def test_empirical_std(self, goal_spec):
        r = goal_reward(goal_spec)
        t = enumerate_transitions(goal_spec)
        d = add_noise(r, 0.3, 9).evaluate(t) - r.evaluate(t)
        assert abs(np.std(d) - 0.3) < 0.2 * 0.3
        assert abs(np.mean(d)) < 4 * 0.3 / np.sqrt(500)

    def test_negative_sigma(self, goal_spec):
        with pytest.raises(InputError):
            NoisyReward(goal_reward(goal_spec), -1.0)


class TestMountainCarRewards:
    def test_ground_truth(self):
        gt = mc_ground_truth()
        t = Transitions(np.zeros((2, 2)), np.zeros(2), np.array([[0.5, 0.01], [0.0, 0.0]]))
        assert gt.evaluate(t).tolist() == [1.0, 0.0]

    def test_one_reward_per_expert_episode(self):
        gt = mc_ground_truth()
        for tr in mc_rollout(mc_expert, 5, seed=3):
            r = gt.evaluate(tr.transitions())
            assert np.count_nonzero(r) == 1 and r[-1] == 1.0

    def test_linear_potential(self):
        assert mc_linear_potential(1, 0).value((0.3, 0.0)) == pytest.approx(0.3)
        assert mc_linear_potential(0, 0).value((0.1, 0.02)) == 0.0
        assert mc_linear_potential(3, 1).value((0.5, 0.02)) == 0.0

    def test_learnedlike_deterministic(self):
        tr = mc_rollout(mc_expert, 1, seed=0)[0].transitions()
        a = mc_learnedlike(mc_ground_truth(), GAMMA, 0.01, 0).evaluate(tr)
        b = mc_learnedlike(mc_ground_truth(), GAMMA, 0.01, 0).evaluate(tr)
        assert np.array_equal(a, b)


class TestValuePotential:
    @pytest.fixture(scope="class")
    @classmethod
    def vp(cls):
        return mc_value_potential(GAMMA, 64)

    def test_terminal_zero(self, vp):
        states = np.c_[np.linspace(0.45, 0.6, 10), np.linspace(-0.07, 0.07, 10)]
        assert np.all(vp(states) == 0.0)

    def test_converged(self, vp):
        assert vp.residual < 1e-6

    def test_bounded_by_goal_reward(self, vp):
        assert np.all(vp.values >= 0) and np.all(vp.values <= 1.0)

    def test_resolution_floor(self):
        with pytest.raises(InputError):
            mc_value_potential(GAMMA, 16)

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceError):
            mc_value_potential(GAMMA, 32, max_iterations=3)

    def test_bellman_consistent_along_expert(self, vp):
        # V(s) >= r + gamma V(s') for the expert's action, up to interpolation error
        tr = mc_rollout(mc_expert, 1, seed=5)[0]
        r = mc_ground_truth().evaluate(tr.transitions())
        v = vp(tr.states)
        assert np.all(v[:-1] >= r + GAMMA * v[1:] - 0.01)

    @pytest.mark.parametrize("coarse", [32, 64])
    def test_refinement_stable(self, coarse):
        rng = np.random.default_rng(0)
        probes = np.c_[rng.uniform(-1.2, 0.6, 100), rng.uniform(-0.07, 0.07, 100)]
        a = mc_value_potential(GAMMA, coarse)
        b = mc_value_potential(GAMMA, 2 * coarse)
        assert np.max(np.abs(a(probes) - b(probes))) < 0.05


class TestTabularFiles:
    def test_round_trip(self, goal_spec, tmp_path):
        r = to_tabular(apply_shaping(goal_reward(goal_spec), random_potential(goal_spec, 1), GAMMA), goal_spec, GAMMA)
        save_tabular(r, tmp_path / "r.json")
        back = load_tabular(tmp_path / "r.json")
        assert back == r and back.gamma == GAMMA
        assert back.spec.terminal_cells == goal_spec.terminal_cells

    def test_format(self, goal_spec):
        d = json.loads(tabular_to_json(goal_reward(goal_spec)))
        assert {"width", "height", "gamma", "entries"} <= set(d)
        assert len(d["entries"]) == 500 and d["entries"][0] == [0, 0, 0, 0.0]

    def test_missing_row(self, goal_spec):
        d = json.loads(tabular_to_json(goal_reward(goal_spec)))
        d["entries"].pop(7)
        with pytest.raises(RewardFileError, match="missing"):
            tabular_from_json(json.dumps(d))

    def test_nan_reports_line(self, goal_spec):
        lines = tabular_to_json(goal_reward(goal_spec)).splitlines()
        idx = next(i for i, line in enumerate(lines) if line.strip().startswith("[12, 3,"))
        lines[idx] = lines[idx].replace("0.0]", "NaN]")
        with pytest.raises(ValidationError) as exc:
            tabular_from_json("\n".join(lines))
        assert exc.value.line == idx + 1

    def test_syntax_error_line(self, goal_spec):
        lines = tabular_to_json(goal_reward(goal_spec)).splitlines()
        lines[40] = lines[40].replace("]", "")
        with pytest.raises(RewardFileError) as exc:
            tabular_from_json("\n".join(lines))
        assert exc.value.line is not None and exc.value.line >= 40

    def test_inconsistent_dynamics(self, goal_spec):
        d = json.loads(tabular_to_json(goal_reward(goal_spec)))
        d["entries"][0][2] = 5
        with pytest.raises(RewardFileError, match="dynamics"):
            tabular_from_json(json.dumps(d))

    def test_duplicate(self, goal_spec):
        d = json.loads(tabular_to_json(goal_reward(goal_spec)))
        d["entries"][1] = list(d["entries"][0])
        with pytest.raises(RewardFileError):
            tabular_from_json(json.dumps(d))

from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from reward_lens.costs import (
    CostSpec,
    TrajectoryPool,
    UniformTransitions,
    epoch_batches,
    penalty,
    pool_items,
    smoothness_cost,
    sparsity_cost,
    trajectory_batches,
)
from reward_lens.env import GridSpec, Trajectory, TransitionPairs, Transitions, enumerate_adjacent_pairs, enumerate_transitions
from reward_lens.errors import InputError
from reward_lens.rewards import TabularReward, goal_reward, path_reward


class TestPenalty:
    def test_l1(self):
        assert penalty("l1", -2.0) == (2.0, -1.0)

    def test_log_at_zero(self):
        assert penalty("log1p_abs", 0.0) == (0.0, 0.0)
        assert penalty("l1", 0.0) == (0.0, 0.0)

    def test_log_closed_form(self):
        v, d = penalty("log1p_abs", math.e - 1)
        assert v == pytest.approx(1.0) and d == pytest.approx(1 / math.e)

    def test_unknown(self):
        with pytest.raises(InputError):
            penalty("l2", 1.0)

    def test_non_finite(self):
        with pytest.raises(InputError):
            penalty("l1", float("inf"))


class TestSparsity:
    def test_goal_oracle(self, goal_spec):
        r = goal_reward(goal_spec)
        j, d = sparsity_cost(r, enumerate_transitions(goal_spec), "l1")
        assert j == oracles.sparsity(r.flat, "l1") == 0.01
        assert d.sum() == pytest.approx(5 / 500)

    def test_zero_reward(self, goal_spec):
        r = TabularReward(goal_spec, np.zeros(500))
        assert sparsity_cost(r, enumerate_transitions(goal_spec), "log1p_abs")[0] == 0

    def test_doubling(self, open_spec):
        r = path_reward(open_spec)
        t = enumerate_transitions(open_spec)
        assert sparsity_cost(TabularReward(open_spec, 2 * r.flat), t, "l1")[0] == pytest.approx(2 * sparsity_cost(r, t, "l1")[0], rel=1e-15)

    def test_empty(self, goal_spec):
        with pytest.raises(InputError):
            sparsity_cost(goal_reward(goal_spec), enumerate_transitions(goal_spec).take([]), "l1")


class TestSmoothness:
    @pytest.mark.parametrize("kind", ["l1", "log1p_abs"])
    def test_goal_oracle(self, goal_spec, kind):
        r = goal_reward(goal_spec)
        j, d1, d2 = smoothness_cost(r, enumerate_adjacent_pairs(goal_spec), kind)
        pairs = oracles.smoothness_pairs(10, 10, r.values.tolist())
        want = math.fsum(oracles.f(kind, a - b) for a, b in pairs) / len(pairs)
        assert j == pytest.approx(want, rel=1e-14)
        assert np.array_equal(d1, -d2)

    def test_constant(self, goal_spec):
        r = TabularReward(goal_spec, np.full(500, 0.37))
        assert smoothness_cost(r, enumerate_adjacent_pairs(goal_spec), "l1")[0] == 0

    def test_self_loop_chains(self, goal_spec):
        t = enumerate_transitions(goal_spec)
        stays = t.take(np.flatnonzero(t.a == 0))
        r = path_reward(GridSpec(10, 10))
        assert smoothness_cost(r, TransitionPairs(stays, stays), "l1")[0] == 0

    def test_unchained(self, goal_spec):
        t = enumerate_transitions(goal_spec)
        with pytest.raises(InputError, match="chained"):
            smoothness_cost(goal_reward(goal_spec), TransitionPairs(t.take([4]), t.take([0])), "l1")


class TestBatching:
    def traj(self, n):
        states = np.c_[np.linspace(-0.5, 0.0, n + 1), np.zeros(n + 1)]
        return Trajectory(states, np.zeros(n))

    def test_pair_count(self):
        assert len(pool_items([self.traj(3)], "smooth")) == 2
        assert len(pool_items([self.traj(3)], "sparse")) == 3

    def test_pairs_chained(self):
        assert pool_items([self.traj(5), self.traj(4)], "smooth").first.s_next.tolist() == pool_items(
            [self.traj(5), self.traj(4)], "smooth"
        ).second.s.tolist()

    def test_epoch_covers_pool_once(self):
        gen = epoch_batches(23, 5, 1)
        idx = np.concatenate([next(gen) for _ in range(5)])
        assert sorted(idx.tolist()) == list(range(23))

    def test_seeded(self):
        a, b = epoch_batches(50, 7, 3), epoch_batches(50, 7, 3)
        assert all(np.array_equal(next(a), next(b)) for _ in range(20))

    def test_reshuffled_each_epoch(self):
        gen = epoch_batches(30, 30, 0)
        assert not np.array_equal(next(gen), next(gen))

    def test_batch_too_large(self):
        with pytest.raises(InputError):
            trajectory_batches([self.traj(3)], "sparse", 4, 0)

    def test_empty_pool(self):
        with pytest.raises(InputError):
            trajectory_batches([], "sparse", 1, 0)

    def test_batches_are_transitions(self):
        batches = trajectory_batches([self.traj(10)], "smooth", 4, 0)
        b = next(batches)
        assert isinstance(b, TransitionPairs) and len(b) == 4 and b.is_chained()


class TestCostSpec:
    def test_names_and_validation(self, goal_spec):
        assert CostSpec("smooth", "log1p_abs", UniformTransitions(goal_spec)).name == "smooth-log"
        with pytest.raises(InputError):
            CostSpec("dense", "l1", UniformTransitions(goal_spec))

    def test_uniform_evaluate(self, goal_spec):
        assert CostSpec("sparse", "l1", UniformTransitions(goal_spec)).evaluate(goal_reward(goal_spec)) == 0.01

    def test_pool_evaluate(self):
        from reward_lens.env import mc_rollout
        from reward_lens.policy import mc_expert
        from reward_lens.rewards import mc_ground_truth

        trajs = mc_rollout(mc_expert, 3, seed=0)
        n = sum(t.length for t in trajs)
        assert CostSpec("sparse", "l1", TrajectoryPool(trajs)).evaluate(mc_ground_truth()) == pytest.approx(3 / n)

from __future__ import annotations

import sys

import numpy as np
import pytest

from conftest import STUBS
from reward_lens.bridge import BlackBoxReward, encode_request, parse_response
from reward_lens.env import Transitions, enumerate_transitions
from reward_lens.errors import BridgeError
from reward_lens.rewards import goal_reward


def stub(mode):
    return [sys.executable, str(STUBS / "reward_stub.py"), mode]


class TestProtocol:
    def test_encode_grid(self):
        assert encode_request(3, 4, 4) == "EVAL 3 4 4\n"

    def test_encode_continuous(self):
        assert encode_request(np.array([-0.5, 0.01]), 1.0, np.array([-0.49, 0.0])) == "EVAL [-0.5,0.01] 1.0 [-0.49,0.0]\n"

    def test_parse(self):
        assert parse_response(" 1.25\n") == 1.25

    @pytest.mark.parametrize("raw", ["abc\n", "nan\n", "inf\n", "\n"])
    def test_parse_rejects(self, raw):
        with pytest.raises(BridgeError) as exc:
            parse_response(raw)
        assert exc.value.raw_line == raw.rstrip("\n")


class TestBlackBox:
    def test_zero(self, goal_spec):
        with BlackBoxReward(stub("zero")) as r:
            assert not r.evaluate(enumerate_transitions(goal_spec)).any()

    def test_goal_matches_table(self, goal_spec):
        t = enumerate_transitions(goal_spec)
        with BlackBoxReward(stub("goal")) as r:
            got = r.evaluate(t)
        assert np.array_equal(got, goal_reward(goal_spec).evaluate(t))

    def test_string_command(self, goal_spec):
        cmd = f"{sys.executable} {STUBS / 'reward_stub.py'} zero"
        with BlackBoxReward(cmd) as r:
            assert r.evaluate(enumerate_transitions(goal_spec).take([0, 1])).tolist() == [0.0, 0.0]

    def test_reusable(self, goal_spec):
        t = enumerate_transitions(goal_spec)
        with BlackBoxReward(stub("goal")) as r:
            assert r.evaluate(t).sum() == r.evaluate(t).sum() == 5

    def test_dying_child(self, goal_spec):
        r = BlackBoxReward(stub("dying"))
        with pytest.raises(BridgeError, match="exited"):
            r.evaluate(enumerate_transitions(goal_spec).take(range(10)))
        with pytest.raises(BridgeError):
            r.evaluate(enumerate_transitions(goal_spec).take([0]))
        r.close()

    def test_malformed(self, goal_spec):
        with BlackBoxReward(stub("malformed")) as r:
            with pytest.raises(BridgeError) as exc:
                r.evaluate(enumerate_transitions(goal_spec).take([0]))
        assert exc.value.raw_line == "not-a-number"

    def test_bad_handshake(self):
        with pytest.raises(BridgeError, match="handshake"):
            BlackBoxReward(stub("silent"))

    def test_missing_program(self):
        with pytest.raises(BridgeError):
            BlackBoxReward(["/nonexistent/reward-program"])

    def test_empty_batch(self):
        empty = Transitions(np.empty(0, dtype=int), np.empty(0, dtype=int), np.empty(0, dtype=int))
        with BlackBoxReward(stub("zero")) as r:
            assert r.evaluate(empty).size == 0

"""Reward process used by the bridge tests.

usage: reward_stub.py MODE
  zero       answer 0 to everything
  goal       1 when s_next is the goal cell (index 99 on a 10x10 grid)
  dying      answer 3 requests then exit
  malformed  answer with text that is not a number
  silent     skip the handshake
"""

import json
import sys

mode = sys.argv[1]
if mode != "silent":
    print("HELLO reward-bridge v1", flush=True)
else:
    print("hi", flush=True)
answered = 0
for line in sys.stdin:
    _, s, a, s_next = line.split(" ")
    s_next = json.loads(s_next)
    if mode == "dying" and answered == 3:
        sys.exit(7)
    if mode == "malformed":
        print("not-a-number", flush=True)
    elif mode == "goal":
        print(1.0 if s_next == 99 else 0.0, flush=True)
    else:
        print(0.0, flush=True)
    answered += 1

#!/usr/bin/env python3
"""Record seeded in-process rollouts as a golden-trace fixture.

Each line: one episode with its seed, the action sequence, and the
per-step observations/rewards/done flags. Remote clients replay the same
seeds and actions against a server and must match field-wise.

    python3 scripts/record_golden_trace.py --mode default --episodes 20 \
        --seed 0 --out golden_trace.jsonl
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np  # noqa: E402

from langreach.env import ReachEnv  # noqa: E402
from langreach.language import TaskMode  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="default")
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-steps", type=int, default=30)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    env = ReachEnv(TaskMode.parse(args.mode))
    rng = np.random.default_rng(args.seed)
    with open(args.out, "w") as fh:
        for ep in range(args.episodes):
            ep_seed = int(rng.integers(0, 2**31 - 1))
            obs, instruction = env.reset(ep_seed)
            record = {
                "seed": ep_seed,
                "mode": args.mode,
                "instruction_tokens": [int(t) for t in obs.tokens],
                "initial_observation": [float(v) for v in obs.features],
                "steps": [],
            }
            for _ in range(args.max_steps):
                action = rng.uniform(-1.0, 1.0, 4)
                obs, reward, done, info = env.step(action)
                record["steps"].append(
                    {
                        "action": [float(a) for a in action],
                        "observation": [float(v) for v in obs.features],
                        "reward": float(reward),
                        "done": bool(done),
                        "hindsight_event": (
                            None
                            if info["hindsight_event"] is None
                            else {
                                "t": info["hindsight_event"].t,
                                "object_index": info["hindsight_event"].object_index,
                                "instruction_tokens": [
                                    int(t) for t in info["hindsight_event"].instruction.tokens
                                ],
                            }
                        ),
                    }
                )
                if done:
                    break
            fh.write(json.dumps(record) + "\n")
    print(args.out)


if __name__ == "__main__":
    main()

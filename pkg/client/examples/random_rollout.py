#!/usr/bin/env python3
"""Drive a random policy against a running environment server.

Start a server first:

    langreach serve --port 7777 --mode default

then:

    python3 examples/random_rollout.py --port 7777 --episodes 5
"""

import argparse

import numpy as np

from langreach_client import RemoteReachEnv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=7777)
    ap.add_argument("--mode", default="default")
    ap.add_argument("--episodes", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    with RemoteReachEnv(args.host, args.port) as env:
        for episode in range(args.episodes):
            obs, info = env.reset(mode=args.mode, seed=args.seed + episode)
            print(f"episode {episode}: \"{env.detokenize(info['instruction_tokens'])}\"")
            total = 0.0
            done = False
            steps = 0
            while not done:
                obs, reward, done, info = env.step(rng.uniform(-1, 1, 4))
                total += reward
                steps += 1
                if info["hindsight_event"] is not None:
                    tokens = info["hindsight_event"]["instruction_tokens"]
                    print(f"  hindsight event at t={info['hindsight_event']['t']}: "
                          f"\"{env.detokenize(tokens)}\"")
            outcome = "success" if info["success"] else "failure"
            print(f"  {outcome} after {steps} steps, return {total:.0f}")


if __name__ == "__main__":
    main()

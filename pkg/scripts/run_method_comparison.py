#!/usr/bin/env python3
"""Method comparison: LCSAC baseline vs HEIR vs HIPSS on one mode.

    python3 scripts/run_method_comparison.py --mode default --seeds 3 \
        --steps 150000 --out runs/methods --workers 2
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from langreach.harness import config_from_dict, run_experiment  # noqa: E402
from langreach.plotting import plot_metrics  # noqa: E402

METHODS = ("lcsac", "heir", "hipss")


def launch(args):
    cfg_dict, out_dir = args
    cfg = config_from_dict(cfg_dict)
    summary = run_experiment(cfg, out_dir)
    return out_dir, summary.final_success_rate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="default")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--steps", type=int, default=150_000)
    ap.add_argument("--eval-every", type=int, default=5_000)
    ap.add_argument("--repr", default="learned_embedding", choices=["one_hot", "learned_embedding"])
    ap.add_argument("--out", required=True)
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    jobs = []
    for method in METHODS:
        for seed in range(args.seeds):
            cfg = {
                "mode": args.mode,
                "method": method,
                "strategy": "future",
                "representation": args.repr,
                "total_env_steps": args.steps,
                "eval_every": args.eval_every,
                "seed": seed,
            }
            jobs.append((cfg, os.path.join(args.out, f"{method}-s{seed}")))

    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        for out_dir, final in pool.map(launch, jobs):
            print(f"{out_dir}: final success {final:.2f}")

    for f in plot_metrics([job[1] for job in jobs], os.path.join(args.out, "figures")):
        print(f)


if __name__ == "__main__":
    main()

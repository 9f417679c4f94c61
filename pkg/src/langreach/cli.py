"""Command-line entry points: train, eval, plot, serve, corpus."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .language import TaskMode


def _add_train(sub):
    p = sub.add_parser("train", help="run one training experiment")
    p.add_argument("--mode", choices=[m.value for m in TaskMode])
    p.add_argument("--method", choices=list(harness.METHODS))
    p.add_argument("--strategy", choices=["episode", "future", "final"])
    p.add_argument("--repr", dest="representation", choices=["one_hot", "learned_embedding"])
    p.add_argument("--steps", type=int, dest="total_env_steps")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="YAML config file; flags override its values")
    p.add_argument("--out", required=True, help="output directory")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=[m.value for m in TaskMode],
                   help="optional sanity check against the checkpoint's mode")


def _add_plot(sub):
    p = sub.add_parser("plot", help="plot success curves from metrics files")
    p.add_argument("--inputs", nargs="+", required=True, help="metrics.csv files or run dirs")
    p.add_argument("--out", required=True, help="output directory for figures")


def _add_serve(sub):
    p = sub.add_parser("serve", help="expose the environment over TCP (JSON lines)")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--mode", default="default", choices=[m.value for m in TaskMode])
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--max-sessions", type=int, default=32)


def _add_corpus(sub):
    p = sub.add_parser("corpus", help="generate a scripted-expert instruction corpus")
    p.add_argument("--mode", default="default", choices=[m.value for m in TaskMode])
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="corpus JSONL path")
    p.add_argument("--trace", help="optional per-step trace JSONL path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="langreach")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_plot(sub)
    _add_serve(sub)
    _add_corpus(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )

    if args.command == "train":
        overrides = {
            "mode": args.mode,
            "method": args.method,
            "strategy": args.strategy,
            "representation": args.representation,
            "total_env_steps": args.total_env_steps,
            "seed": args.seed,
        }
        cfg = harness.load_config(args.config, overrides)
        summary = harness.run_experiment(cfg, args.out)
        print(json.dumps(summary.__dict__, indent=2))
        return 0

    if args.command == "eval":
        rate, records = harness.evaluate_checkpoint(args.checkpoint, args.episodes, args.seed, args.mode)
        for rec in records:
            print(json.dumps(rec))
        print(json.dumps({"success_rate": rate, "episodes": args.episodes}))
        return 0

    if args.command == "plot":
        from .plotting import plot_metrics

        for path in plot_metrics(args.inputs, args.out):
            print(path)
        return 0

    if args.command == "serve":
        from .server import serve

        serve(args.port, args.mode, args.host, args.max_sessions)
        return 0

    if args.command == "corpus":
        written = harness.generate_expert_corpus(
            args.mode, args.episodes, args.seed, args.out, trace_path=args.trace
        )
        print(json.dumps({"successful_episodes": written, "path": args.out}))
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Offline seq2seq training on a scripted-expert corpus.

    python3 scripts/train_hipss_offline.py --mode default --episodes 2000 \
        --epochs 60 --out runs/hipss_default
"""

import argparse
import json
import logging
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from langreach.harness import generate_expert_corpus, train_hipss_on_corpus  # noqa: E402
from langreach.hipss import HipssConfig  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="default")
    ap.add_argument("--episodes", type=int, default=2000)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--target-val-acc", type=float, default=None)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    os.makedirs(args.out, exist_ok=True)
    corpus = os.path.join(args.out, "corpus.jsonl")
    n = generate_expert_corpus(args.mode, args.episodes, args.seed, corpus)
    print(f"corpus: {n} successful episodes -> {corpus}")

    cfg = HipssConfig(hidden=args.hidden)
    model, dataset, history = train_hipss_on_corpus(
        corpus, args.mode, cfg, seed=args.seed, epochs=args.epochs,
        target_val_acc=args.target_val_acc,
    )
    final = {
        "train_size": len(dataset.train),
        "val_size": len(dataset.val),
        "train_acc": model.word_accuracy(dataset.train),
        "val_acc": model.word_accuracy(dataset.val),
        "epochs_run": len(history),
    }
    with open(os.path.join(args.out, "result.json"), "w") as fh:
        json.dump(final, fh, indent=2)
    print(json.dumps(final, indent=2))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Long pendulum training runs: three architectures, three seeds each.

The short acceptance suite only checks structural properties; this script
reproduces the qualitative long-horizon comparison (the periodic-times-
envelope architecture tends to learn fastest and plateau highest) as a
non-binding expectation.  Expect a few hours at the default 2000 episodes.

Usage:
    python scripts/rl_long_run.py --out results/rl_long [--episodes 2000]

Writes one learning-curve CSV per (architecture, seed) plus a summary JSON;
plot with ``plotkit curves``.
"""

import argparse
import json
import os

import numpy as np

from gpbnn import pendulum


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--episodes", type=int, default=2000)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    summary = {}
    for kind in pendulum.ARCH_KINDS:
        finals = []
        for seed in args.seeds:
            cfg = pendulum.AgentConfig(kind=kind)
            run_dir = os.path.join(args.out, f"{kind}_seed{seed}")
            curve, _ = pendulum.train_run(cfg, args.episodes, seed, out_dir=run_dir)
            tail = float(np.mean(curve[-50:, 1]))
            finals.append(tail)
            print(f"{kind} seed {seed}: mean reward over last 50 episodes {tail:.0f}")
        summary[kind] = {
            "mean_final_reward": float(np.mean(finals)),
            "stderr": float(np.std(finals, ddof=1) / np.sqrt(len(finals))),
            "seeds": args.seeds,
        }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    ranking = sorted(summary, key=lambda k: -summary[k]["mean_final_reward"])
    print("ranking (best first):", " > ".join(ranking))


if __name__ == "__main__":
    main()

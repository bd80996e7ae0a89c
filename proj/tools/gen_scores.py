#!/usr/bin/env python3
"""Write a synthetic score sheet: 5 papers x (3 human raters + agent) x 27 items.

Each paper has a latent quality per item; humans add small independent noise
and the agent adds a paper-specific amount of extra noise. Output is fully
determined by the seed.
"""
import argparse
import csv
import random
import sys


def clamp(v):
    return max(0, min(5, v))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=20240611)
    parser.add_argument("--papers", type=int, default=5)
    parser.add_argument("--out", default="-")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["paper_id", "rater_id", "item_id", "score"])
    agent_noise = [0.05, 0.45, 0.1, 0.3, 0.2]
    for p in range(1, args.papers + 1):
        paper = f"paper-{p}"
        latent = [rng.choice([1, 2, 3, 3, 4, 4, 4, 5, 5]) for _ in range(27)]
        for rater in ("expert-1", "expert-2", "expert-3"):
            for item in range(1, 28):
                delta = rng.choices([-1, 0, 1], weights=[1, 6, 1])[0]
                writer.writerow([paper, rater, item, clamp(latent[item - 1] + delta)])
        noise = agent_noise[(p - 1) % len(agent_noise)]
        for item in range(1, 28):
            delta = 0
            if rng.random() < noise:
                delta = rng.choice([-2, -1, 1])
            writer.writerow([paper, "agent", item, clamp(latent[item - 1] + delta)])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()

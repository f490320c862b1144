#!/usr/bin/env python3
"""Target-length-prediction ablation on the variable-length copy task."""

import argparse

from snda.evaluation import ablation_report
from snda.sampling import SamplerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=1200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    table, machine = ablation_report(
        "copy",
        [{"s": 2, "length_pred": True}, {"s": 2, "length_pred": False}],
        train_kwargs={"total_steps": args.steps},
        sampler_cfg=SamplerConfig(T=10, temperature=0.3, rerank_width=4,
                                  seed=99),
        seed=args.seed)
    print(table)
    print()
    for line in machine:
        print(line)


if __name__ == "__main__":
    main()

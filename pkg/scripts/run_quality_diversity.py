#!/usr/bin/env python3
"""Quality/diversity curve for the toy character-level language model.

Trains the LM on the template-grammar corpus, then sweeps sampling
temperatures and reports corpus BLEU against the references (quality)
and self-BLEU (inverse diversity).
"""

import argparse

from snda.data import encode
from snda.evaluation import quality_diversity_curve, strip_pad
from snda.experiments import train_toy_lm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=800)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--temps", default="0.2,0.5,0.8,1.1,1.5")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model, vocab, lines = train_toy_lm(seed=args.seed, total_steps=args.steps)
    refs = [strip_pad(encode(ln, vocab, model.config.N).ids) for ln in lines]
    temps = sorted(float(t) for t in args.temps.split(","))
    points = quality_diversity_curve(model, temps, args.samples, refs,
                                     seed=args.seed)
    print(f"{'tau':>6} {'quality_bleu':>13} {'self_bleu':>10}")
    for p in points:
        print(f"{p.temperature:>6.2f} {p.quality_bleu:>13.2f} {p.self_bleu:>10.2f}")


if __name__ == "__main__":
    main()

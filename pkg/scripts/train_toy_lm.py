#!/usr/bin/env python3
"""Train the toy character LM and save a checkpoint + vocab + a few samples."""

import argparse

from snda.checkpoint import save_checkpoint
from snda.data import TokenSeq, decode
from snda.evaluation import strip_pad
from snda.sampling import SamplerConfig, sample_chain
from snda.experiments import train_toy_lm

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=800)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="toy_lm.ckpt")
    args = ap.parse_args()

    model, vocab, _ = train_toy_lm(seed=args.seed, total_steps=args.steps)
    save_checkpoint(model, args.out, seed=args.seed)
    vocab.save(args.out + ".vocab")
    print(f"checkpoint: {args.out}")
    for i in range(5):
        cfg = SamplerConfig(T=16, temperature=0.4, seed=args.seed + i)
        final = sample_chain(model, cfg).states[-1]
        ids = strip_pad(final)
        print("sample:", decode(TokenSeq(np.asarray(final), len(ids)), vocab))


if __name__ == "__main__":
    main()

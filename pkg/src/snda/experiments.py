"""Desk-scale experiment runs shared by the CLI, scripts, and tests.

Budgets here are sized for CPU minutes: small transformers on synthetic
sequence-to-sequence tasks and a toy character language model.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .data import (PairBatch, Vocab, encode, make_batch, pairs_to_batch,
                   synth_task_gen, toy_char_corpus)
from .model import ModelConfig, DenoiserModel, denoise_logits, init_model
from .training import (TrainConfig, averaged_model, make_train_state,
                       train_loop)


def desk_model_config(v: int, N: int, mode: str, N_source: int | None = None,
                      dropout: float = 0.1, **overrides) -> ModelConfig:
    kwargs = dict(v=v, N=N, layers=2, d_model=64, heads=4, d_ff=256,
                  dropout=dropout, mode=mode, N_source=N_source, d_LP=64)
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def desk_train_config(total_steps: int, batch_size: int = 32, seed: int = 0,
                      unroll_terms: int = 2, **overrides) -> TrainConfig:
    # paper-recipe shape, learning rates rescaled for minutes-long runs
    kwargs = dict(unroll_terms=unroll_terms, batch_size=batch_size,
                  total_steps=total_steps, warmup_steps=min(100, total_steps),
                  lr_start=1e-7, lr_peak=2e-3, lr_min=2e-4,
                  label_smoothing=0.1, weight_decay=0.01, seed=seed)
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


def train_synthetic(kind: str, unroll_terms: int = 2, length_pred: bool = True,
                    seed: int = 0, v_task: int = 14, len_range=(4, 12),
                    N: int = 16, total_steps: int = 1200, batch_size: int = 32,
                    heldout_count: int = 100, log_fn=None,
                    model_overrides: dict | None = None,
                    **train_overrides) -> tuple[DenoiserModel, list]:
    """Train an encoder-decoder denoiser on copy / reverse_cipher.

    With length_pred off every batch carries a constant target length of 1
    so the length embedding is uninformative. Held-out pairs come from a
    seed-separated stream. Returns (averaged model, held-out pairs).
    """
    v = v_task + 2
    mkwargs = dict(dropout=0.0)
    mkwargs.update(model_overrides or {})
    mcfg = desk_model_config(v, N, "encoder_decoder", **mkwargs)
    model = init_model(mcfg, np.random.default_rng(seed))
    tcfg = desk_train_config(total_steps, batch_size, seed,
                             unroll_terms=unroll_terms, **train_overrides)
    state = make_train_state(model, tcfg)

    task_seed = seed + 10_000  # shared by train stream and cipher permutation

    def batch_fn(step, rng):
        draw = int(rng.integers(0, 2**31))
        batch_pairs = _task_pairs(task_seed, draw, batch_size, kind, len_range, v_task, N)
        batch = pairs_to_batch(batch_pairs)
        if not length_pred:
            batch = PairBatch(batch.sources, batch.targets,
                              batch.source_lengths,
                              np.ones_like(batch.target_lengths))
        return batch

    train_loop(state, batch_fn, log_fn=log_fn)
    heldout = _task_pairs(task_seed, 2**31 + 17, heldout_count, kind,
                          len_range, v_task, N)
    return averaged_model(state), heldout


def _task_pairs(perm_seed: int, draw_seed: int, count: int, kind: str,
                len_range, v_task: int, N: int) -> list:
    """Pairs with the cipher permutation fixed by perm_seed but fresh draws.

    synth_task_gen ties permutation and example draws to one seed; here the
    permutation stays constant across the run while draws vary per step.
    """
    rng = np.random.default_rng(perm_seed)
    perm = rng.permutation(v_task)
    draw = np.random.default_rng(draw_seed)
    lo, hi = len_range
    pairs = []
    from .data import TokenSeq
    for _ in range(count):
        n = int(draw.integers(lo, hi + 1))
        toks = draw.integers(0, v_task, size=n)
        src = np.full(N, 0, dtype=np.int64)
        src[:n] = toks + 2
        out = toks if kind == "copy" else perm[toks[::-1]]
        tgt = np.full(N, 0, dtype=np.int64)
        tgt[:n] = out + 2
        pairs.append((TokenSeq(src, n), TokenSeq(tgt, n)))
    return pairs


def train_toy_lm(seed: int = 0, total_steps: int = 800, batch_size: int = 32,
                 N: int = 32, corpus_docs: int = 2000, log_fn=None,
                 **train_overrides):
    """Character-level toy language model on the template-grammar corpus."""
    lines = toy_char_corpus(seed + 5, corpus_docs)
    vocab = Vocab.from_corpus(lines, kind="char")
    corpus = [encode(ln, vocab, N) for ln in lines]
    mcfg = desk_model_config(vocab.size, N, "unconditional", dropout=0.0)
    model = init_model(mcfg, np.random.default_rng(seed))
    tcfg = desk_train_config(total_steps, batch_size, seed, **train_overrides)
    state = make_train_state(model, tcfg)

    def batch_fn(step, rng):
        return make_batch(corpus, batch_size, N, rng)

    train_loop(state, batch_fn, log_fn=log_fn)
    return averaged_model(state), vocab, lines


def bench_report(model: DenoiserModel, T_values: list[int], batch: int = 32,
                 seed: int = 0) -> tuple[str, list[dict]]:
    """Decoding-cost comparison: chain steps vs a causal greedy baseline.

    Counts full-sequence forward passes (chain: T; baseline: one per
    position) and measures wall clock for both on the same network. Paper
    reference gains are printed alongside, never asserted.
    """
    from .sampling import SamplerConfig, sample_chain

    N = model.config.N
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, model.config.v, size=(batch, N))

    from .training import sample_tokens

    def ar_decode():
        y = ids.copy()
        for pos in range(N):
            logits = denoise_logits(model, y, causal=True).data
            y[:, pos] = logits[:, pos].argmax(axis=-1)

    def chain_decode(T):
        x = rng.integers(0, model.config.v, size=(batch, N))
        for _ in range(T):
            logits = denoise_logits(model, x).data
            # full-update low-temperature step, batched
            x = sample_tokens(logits, rng, 0.5)

    def timed(fn, repeats=2):
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        return best

    chain_decode(1)  # warm caches before timing
    ar_time = timed(ar_decode)

    paper_gain = {4: "4.7x", 8: "2.6x", 10: "2.2x", 16: "1.4x"}
    rows = []
    for T in T_values:
        chain_time = timed(lambda: chain_decode(T))
        rows.append({
            "N": N, "T": T,
            "forward_pass_ratio": N / T,
            "wallclock_gain": ar_time / chain_time,
            "paper_reported": paper_gain.get(T, "-"),
        })

    lines = [f"{'N':>4} {'T':>4} {'fwd-pass ratio':>15} {'wall-clock gain':>16} {'paper':>7}"]
    for r in rows:
        lines.append(f"{r['N']:>4} {r['T']:>4} {r['forward_pass_ratio']:>15.2f} "
                     f"{r['wallclock_gain']:>16.2f} {r['paper_reported']:>7}")
    return "\n".join(lines), rows

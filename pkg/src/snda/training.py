"""Training: unrolled denoising loss, optimizer loop, checkpoint averaging.

The loss corrupts each example (independent proportion per example),
reconstructs, then feeds the model's own samples back in for further
reconstruction terms. Gradients never flow through the sampled tokens;
each additional term only contributes through its own forward pass.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .corruption import corrupt_batch
from .data import PairBatch
from .model import (Conditioning, DenoiserModel, build_conditioning,
                    denoise_logits, length_class, predict_length)
from .numerics import NumericError, ParamSet, Tensor, cross_entropy, softmax_array


@dataclass
class TrainConfig:
    unroll_terms: int = 2
    batch_size: int = 32
    total_steps: int = 1000
    warmup_steps: int = 100
    lr_start: float = 1e-7
    lr_peak: float = 1e-4
    lr_min: float = 1e-5
    label_smoothing: float = 0.1
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-6
    ckpt_average_window: int = 10
    snapshot_interval: int | None = None   # default: total_steps // 20
    seed: int = 0

    def __post_init__(self):
        if self.unroll_terms < 1:
            raise ValueError("unroll_terms must be >= 1")
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must not exceed total_steps")
        if min(self.lr_start, self.lr_peak, self.lr_min) <= 0:
            raise ValueError("learning rates must be positive")
        if self.snapshot_interval is None:
            self.snapshot_interval = max(1, self.total_steps // 20)


@dataclass
class TrainState:
    model: DenoiserModel
    cfg: TrainConfig
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    snapshots: deque
    rng: np.random.Generator


def make_train_state(model: DenoiserModel, cfg: TrainConfig) -> TrainState:
    zeros = {k: np.zeros_like(t.data) for k, t in model.params.items()}
    return TrainState(
        model=model, cfg=cfg,
        m=zeros, v={k: z.copy() for k, z in zeros.items()},
        step=0, snapshots=deque(maxlen=cfg.ckpt_average_window),
        rng=np.random.default_rng(cfg.seed),
    )


def sample_tokens(logits: np.ndarray, rng: np.random.Generator,
                  temperature: float = 1.0) -> np.ndarray:
    """Inverse-CDF sample per position from softmax(logits / temperature)."""
    probs = softmax_array(logits, temperature)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    return np.minimum((u > cdf).sum(axis=-1), probs.shape[-1] - 1)


def loss_unrolled(model: DenoiserModel, batch, s: int,
                  rng: np.random.Generator, train_mode: bool = False,
                  label_smoothing: float = 0.0) -> tuple[Tensor, list[float]]:
    """Mean of s chain-reconstruction terms (+ length loss when conditional).

    batch is either an [B, N] id array (unconditional) or a PairBatch.
    The chain is sampled at temperature 1 with gradients severed at the
    sampled tokens.
    """
    if s < 1:
        raise ValueError("unroll term count must be >= 1")
    cfg = model.config
    cond = None
    length_loss = None
    if isinstance(batch, PairBatch):
        if cfg.mode != "encoder_decoder":
            raise ValueError("PairBatch requires encoder_decoder mode")
        cond = build_conditioning(model, batch.sources, batch.source_lengths,
                                  target_length=batch.target_lengths,
                                  train_mode=train_mode, rng=rng)
        lp = predict_length(model, cond.encodings, batch.source_lengths)
        labels = length_class(batch.target_lengths, cfg.length_downsample)
        length_loss = cross_entropy(lp.logits, labels)
        targets = batch.targets
    else:
        targets = np.asarray(batch, dtype=np.int64)

    x_t = corrupt_batch(targets, cfg.v, rng)
    terms = []
    total = None
    for t in range(s):
        if t > 0:
            x_t = sample_tokens(logits.data, rng)  # severed: raw array in, no graph
        logits = denoise_logits(model, x_t, cond, train_mode, rng)
        term = cross_entropy(logits, targets, label_smoothing)
        terms.append(term.item())
        total = term if total is None else total + term
    loss = total * (1.0 / s)
    if length_loss is not None:
        loss = loss + length_loss
    return loss, terms


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to lr_peak, then cosine decay to lr_min."""
    if step <= cfg.warmup_steps:
        if cfg.warmup_steps == 0:
            return cfg.lr_peak
        frac = step / cfg.warmup_steps
        return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * frac
    progress = (step - cfg.warmup_steps) / (cfg.total_steps - cfg.warmup_steps)
    return cfg.lr_min + 0.5 * (cfg.lr_peak - cfg.lr_min) * (1.0 + math.cos(math.pi * progress))


def train_step(state: TrainState, batch) -> TrainState:
    """One optimizer step: unrolled loss, Adam update with decoupled decay."""
    cfg = state.cfg
    model = state.model
    model.params.zero_grad()
    loss, terms = loss_unrolled(model, batch, cfg.unroll_terms, state.rng,
                                train_mode=True, label_smoothing=cfg.label_smoothing)
    if not np.isfinite(loss.item()):
        raise NumericError(f"non-finite loss at step {state.step}")
    loss.backward()

    state.step += 1
    lr = lr_schedule(state.step, cfg)
    t = state.step
    for name, p in model.params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        p.data -= (lr * (mhat / (np.sqrt(vhat) + cfg.adam_eps)
                         + cfg.weight_decay * p.data)).astype(p.data.dtype)

    if state.step % cfg.snapshot_interval == 0:
        state.snapshots.append(model.params.copy_values())
    state._last_loss = loss.item()  # noqa: B010 - stashed for the log line
    state._last_terms = terms
    return state


def metrics_line(state: TrainState) -> str:
    lr = lr_schedule(state.step, state.cfg)
    parts = [f"step={state.step}", f"loss={state._last_loss:.6f}", f"lr={lr:.10g}"]
    parts += [f"term{i + 1}={t:.6f}" for i, t in enumerate(state._last_terms)]
    return " ".join(parts)


def train_loop(state: TrainState, batch_fn, log_every: int = 50,
               log_fn=None) -> list[str]:
    """Run total_steps steps; batch_fn(step, rng) must be seed-deterministic."""
    lines = []
    batch_rng = np.random.default_rng(state.cfg.seed + 1)
    for _ in range(state.cfg.total_steps):
        batch = batch_fn(state.step, batch_rng)
        train_step(state, batch)
        if state.step % log_every == 0 or state.step == state.cfg.total_steps:
            line = metrics_line(state)
            lines.append(line)
            if log_fn:
                log_fn(line)
    return lines


def average_checkpoints(snapshots) -> dict[str, np.ndarray]:
    """Arithmetic mean per parameter over snapshots."""
    snaps = [s.copy_values() if isinstance(s, ParamSet) else s for s in snapshots]
    if not snaps:
        raise ValueError("need at least one snapshot")
    names = list(snaps[0])
    for s in snaps[1:]:
        if list(s) != names or any(s[k].shape != snaps[0][k].shape for k in names):
            raise ValueError("snapshot shape mismatch")
    # accumulate in float64 so averaging identical snapshots is bit-exact
    return {k: np.mean(np.stack([s[k] for s in snaps]).astype(np.float64),
                       axis=0).astype(snaps[0][k].dtype)
            for k in names}


def averaged_model(state: TrainState) -> DenoiserModel:
    """Evaluation model: mean of the recent snapshots (or current params)."""
    model = DenoiserModel(state.model.config,
                          state.model.params.astype(state.model.config.dtype))
    if state.snapshots:
        model.params.load_values(average_checkpoints(list(state.snapshots)))
    return model

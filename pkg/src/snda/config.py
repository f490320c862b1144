"""Run configuration: flat `key = value` files plus `--key value` overrides.

Nested settings use dotted keys (model.layers, train.total_steps,
sampler.temperature). Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Bad config file or flag."""


_MODEL_KEYS = {"v", "N", "layers", "d_model", "heads", "d_ff", "dropout",
               "mode", "N_source", "d_LP", "length_downsample", "dtype"}
_TRAIN_KEYS = {"unroll_terms", "batch_size", "total_steps", "warmup_steps",
               "lr_start", "lr_peak", "lr_min", "label_smoothing",
               "weight_decay", "beta1", "beta2", "adam_eps",
               "ckpt_average_window", "snapshot_interval", "seed"}
_SAMPLER_KEYS = {"T", "temperature", "strategy", "update_fraction", "schedule",
                 "rerank_width", "uncertain_share", "early_stop", "seed"}
_TOP_KEYS = {"task", "corpus", "vocab", "checkpoint", "checkpoint_out", "out",
             "report", "seed", "count", "template", "temps", "steps",
             "strategy", "v_task", "len_min", "len_max", "input",
             "char_template", "log_every"}


@dataclass
class RunConfig:
    """Flattened settings for one CLI invocation."""

    top: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.top.get(key, default)


def _convert(raw: str):
    text = raw.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def set_key(cfg: RunConfig, key: str, raw_value: str):
    value = _convert(raw_value)
    if "." in key:
        section, sub = key.split(".", 1)
        table = {"model": (_MODEL_KEYS, cfg.model),
                 "train": (_TRAIN_KEYS, cfg.train),
                 "sampler": (_SAMPLER_KEYS, cfg.sampler)}.get(section)
        if table is None:
            raise ConfigError(f"unknown config section: {section!r}")
        allowed, target = table
        if sub not in allowed:
            raise ConfigError(f"unknown config key: {key!r}")
        target[sub] = value
    else:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key: {key!r}")
        cfg.top[key] = value


def parse_config_file(path: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, _, value = text.partition("=")
            set_key(cfg, key.strip(), value)
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Effective config as a re-parseable `key = value` listing."""
    lines = []
    for k in sorted(cfg.top):
        lines.append(f"{k} = {cfg.top[k]}")
    for section, table in (("model", cfg.model), ("train", cfg.train),
                           ("sampler", cfg.sampler)):
        for k in sorted(table):
            lines.append(f"{section}.{k} = {table[k]}")
    return "\n".join(lines) + "\n"

"""Plain ``key=value`` configuration files.

Blank lines and ``#`` comments are ignored. Values keep their raw string form
here; consumers coerce through the typed getters. The config path may also
come from the ``TVGLAB_CONFIG`` environment variable, and command-line flags
override file values.

Recognized keys (all optional): group_size, kl_coeff, clip_epsilon,
adv_epsilon, learning_rate, ref_refresh_every, seed, tvg_prob, lexicon_path,
n_videos, heldout_videos, timesteps, n_actions, feature_dim, noise_sigma,
span_min, span_max, corpus_seed, bins, hidden, temperature, policy_seed,
warmup_iters, warmup_tvg_prob, branch_iters, iters, train_seed, branch_seed,
share_trunk, miou_margin.
"""

from __future__ import annotations

import os
from pathlib import Path

ENV_CONFIG_PATH = "TVGLAB_CONFIG"


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {line_no}: expected key=value, got {stripped!r}")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None) -> dict[str, str]:
    """Read the config file at ``path``, or at $TVGLAB_CONFIG, or return {}."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH)
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


def _missing(key):
    raise ConfigError(f"missing required config key {key!r}")


def get_int(values: dict[str, str], key: str, default: int | None = None) -> int:
    if key not in values:
        return default if default is not None else _missing(key)
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be an integer, got {values[key]!r}") from None


def get_float(values: dict[str, str], key: str, default: float | None = None) -> float:
    if key not in values:
        return default if default is not None else _missing(key)
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be a number, got {values[key]!r}") from None


def get_bool(values: dict[str, str], key: str, default: bool) -> bool:
    if key not in values:
        return default
    raw = values[key].lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key!r} must be a boolean, got {values[key]!r}")


def get_optional(values: dict[str, str], key: str) -> str | None:
    raw = values.get(key)
    return None if raw in (None, "", "none", "never") else raw

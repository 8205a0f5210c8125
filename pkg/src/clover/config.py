"""Configuration file parsing and precedence merging.

The file format is plain INI: `key = value` lines grouped in sections, one
section per module area. Values override the built-in defaults; command
line flags override both. The [grid] section is special: each key names a
configuration knob (dotted paths allowed) and its comma-separated values
span a cross product of variants.
"""

from __future__ import annotations

import configparser
import itertools
from pathlib import Path

from .pipeline import PipelineConfig, apply_overrides


class ConfigError(ValueError):
    """Bad configuration input; maps to the usage-error exit code."""


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _opt_int(text):
    return None if text.strip().lower() == "none" else int(text)


def _opt_float(text):
    return None if text.strip().lower() == "none" else float(text)


def _float_triplet(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ConfigError(f"expected three fractions, got {text!r}")
    return tuple(float(p) for p in parts)


def _int_tuple(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError("expected at least one integer")
    return tuple(int(p) for p in parts)


def _norm(text):
    low = text.strip().lower()
    if low not in ("linf", "l2"):
        raise ConfigError(f"p_norm must be linf or l2, got {text!r}")
    return low


def _metric(text):
    low = text.strip().lower()
    if low not in ("cc", "gini", "fol"):
        raise ConfigError(f"guiding_metric must be cc, gini, or fol, got {text!r}")
    return low


def _lower(text):
    return text.strip().lower()


# (section, key) -> (dotted config path, converter)
SCHEMA = {
    ("data", "source"): ("data.source", _lower),
    ("data", "csv_path"): ("data.csv_path", str),
    ("data", "normalization"): ("data.normalization", _lower),
    ("data", "num_classes"): ("data.num_classes", _int),
    ("data", "dimension"): ("data.dimension", _int),
    ("data", "samples_per_class"): ("data.samples_per_class", _int),
    ("data", "spread"): ("data.spread", _float),
    ("data", "split"): ("data.split_fractions", _float_triplet),
    ("model", "hidden_dims"): ("train.hidden_dims", _int_tuple),
    ("train", "epochs"): ("train.epochs", _int),
    ("train", "lr"): ("train.lr", _float),
    ("train", "batch_size"): ("train.batch_size", _int),
    ("attack", "epsilon"): ("attack.epsilon", _float),
    ("attack", "p_norm"): ("attack.p_norm", _norm),
    ("attack", "fgsm_step"): ("attack.fgsm_step", _opt_float),
    ("attack", "pgd_step"): ("attack.pgd_step", _opt_float),
    ("attack", "pgd_iters"): ("attack.pgd_iters", _int),
    ("attack", "raw_gradient"): ("attack.raw_gradient", _bool),
    ("fuzz", "epsilon"): ("fuzz.epsilon", _float),
    ("fuzz", "delta"): ("fuzz.delta", _float),
    ("fuzz", "k"): ("fuzz.k", _int),
    ("fuzz", "m"): ("fuzz.m", _int),
    ("fuzz", "max_lr"): ("fuzz.max_lr", _float),
    ("fuzz", "p_norm"): ("fuzz.p_norm", _norm),
    ("fuzz", "budget_attempts"): ("fuzz.budget_attempts", _opt_int),
    ("fuzz", "budget_seconds"): ("fuzz.budget_seconds", _opt_float),
    ("fuzz", "guiding_metric"): ("fuzz.guiding_metric", _metric),
    ("fuzz", "select_order"): ("fuzz.select_order", _lower),
    ("fuzz", "use_seed_equivalence"): ("fuzz.use_seed_equivalence", _bool),
    ("fuzz", "eq_update"): ("fuzz.eq_update", _lower),
    ("fuzz", "raw_gradient"): ("fuzz.raw_gradient", _bool),
    ("fuzz", "seed"): ("fuzz.seed", _int),
    ("select", "selector"): ("selector", _lower),
    ("select", "n"): ("n", _int),
    ("select", "km_sections"): ("km_sections", _int),
    ("select", "cc_section"): ("cc_section", _opt_int),
    ("retrain", "epochs"): ("retrain.epochs", _int),
    ("retrain", "lr"): ("retrain.lr", _float),
    ("retrain", "batch_size"): ("retrain.batch_size", _int),
    ("pipeline", "strategy"): ("strategy", _lower),
    ("pipeline", "per_attacker_count"): ("per_attacker_count", _int),
    ("pipeline", "seed"): ("seed", _int),
    ("pipeline", "out_dir"): ("out_dir", str),
}

# dotted path -> converter, for flag values and [grid] entries
PATH_TYPES = {path: conv for (path, conv) in SCHEMA.values()}


def read_config_file(path):
    """Parse an INI file into {dotted path: typed value}, plus raw [grid]."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = {}
    grid = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if section == "grid":
                grid[key] = raw
                continue
            try:
                dotted, convert = SCHEMA[(section, key)]
            except KeyError:
                raise ConfigError(
                    f"{path}: unknown config key [{section}] {key}"
                ) from None
            try:
                value = convert(raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}: [{section}] {key}: {exc}") from None
            values[dotted] = value
    return values, grid


def convert_for_path(path, raw):
    """Coerce one raw string for a dotted config path."""
    convert = PATH_TYPES.get(path)
    if convert is None:
        raise ConfigError(f"unknown config knob: {path}")
    try:
        return convert(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_grid(raw_grid):
    """Expand a [grid] section (or --vary flags) into variant dicts.

    Each knob's comma-separated values multiply into a cross product, in
    the order the knobs were given.
    """
    if not raw_grid:
        return []
    axes = []
    for path, raw in raw_grid.items():
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if not parts:
            raise ConfigError(f"grid knob {path} has no values")
        axes.append([(path, convert_for_path(path, part)) for part in parts])
    variants = []
    for combo in itertools.product(*axes):
        variants.append(dict(combo))
    return variants


def build_config(file_values=None, flag_values=None):
    """Defaults, then config file, then flags. Validation errors become
    ConfigError so the CLI can report them as usage problems."""
    cfg = PipelineConfig()
    try:
        if file_values:
            cfg = apply_overrides(cfg, file_values)
        if flag_values:
            cfg = apply_overrides(cfg, {k: v for k, v in flag_values.items() if v is not None})
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg

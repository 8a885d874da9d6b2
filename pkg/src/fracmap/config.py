"""Run configuration: a key = value file with sections plus ``--set`` overrides.

Top-level keys (n, s, t, schedule) sit before any section header; dotted keys
such as ``optimizer.tol_grad`` live under ``[optimizer]``.  Every key has a
default and a type inferred from it; unknown keys are rejected.
"""
from __future__ import annotations

import configparser
import math
from fractions import Fraction
from pathlib import Path

from .errors import DomainError

ROOT = "root"

DEFAULTS: dict = {
    "n": 1,
    "s": 0.5,
    "t": 0.6,
    "schedule": (0.7, 0.6, 0.55),
    "mesh.resolution": 256,
    "target.dim": 2,
    "optimizer.max_iters": 20000,
    "optimizer.tol_grad": 1e-6,
    "optimizer.c1": 1e-4,
    "optimizer.backtrack": 0.5,
    "optimizer.max_backtracks": 40,
    "optimizer.initial_step": 1.0,
    "optimizer.step_growth": 2.0,
    "optimizer.max_node_move": 0.1,
    "optimizer.min_step": 1e-14,
    "quadrature.diagonal": "exclude",
    "experiment.seed": 0,
    "experiment.field": "",
    "experiment.k": 1,
    "experiment.noise": 0.05,
    "experiment.concentrate": 1.0,
    "experiment.lambda": (1.2, 1.5),
    "experiment.t_list": (0.55, 0.6),
    "experiment.t_over_s": (1.0, 1.1, 1.4),
    "experiment.samples": 10000,
    "experiment.rho": (0.3, 0.5),
    "experiment.eps": math.inf,
    "experiment.concentration_rho": 0.5,
    "experiment.r": 1.0,
    "experiment.delta": (0.1, 0.2),
    "experiment.rotation": 0.1,
    "experiment.fields": 20,
    "experiment.h": 1e-6,
    "experiment.ell": (1, 2, 3),
    "experiment.alpha": (1.5, 2.0, 3.0),
    "experiment.sd_lambda": (0.25, 0.5, 0.9),
    "experiment.angles_over_pi": (1 / 6, 1 / 2, 5 / 6),
    "experiment.R": (1.0, 3.0),
    "experiment.grid": 1000,
}

# per-command overrides of the defaults, applied before the config file
COMMAND_DEFAULTS: dict = {
    "grad-check": {"mesh.resolution": 32, "experiment.t_list": (0.5, 0.6)},
    "rescale-check": {"mesh.resolution": 512, "experiment.noise": 0.0},
    "balance-check": {"mesh.resolution": 512, "experiment.noise": 0.0},
    "glue-check": {"mesh.resolution": 2048, "experiment.noise": 0.0},
    "cutoff-decay": {"mesh.resolution": 2048},
}


class ConfigError(DomainError):
    """Invalid configuration; ``key`` names the offending entry (or file)."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


def _number(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(t)
    except ValueError:
        return float(Fraction(t))


def parse_value(key: str, text: str):
    """Convert ``text`` to the type of the default for ``key``."""
    if key not in DEFAULTS:
        raise ConfigError("unknown configuration key", key)
    ref = DEFAULTS[key]
    try:
        if isinstance(ref, bool):
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(ref, int):
            return int(text.strip())
        if isinstance(ref, float):
            return _number(text)
        if isinstance(ref, tuple):
            items = [x for x in text.replace(";", ",").split(",") if x.strip()]
            if not items:
                raise ValueError("empty list")
            if all(isinstance(x, int) for x in ref):
                return tuple(int(x.strip()) for x in items)
            return tuple(_number(x) for x in items)
        return text.strip()
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse {text!r} ({exc})", key) from None


def read_file(path) -> dict:
    """Parse a config file into a flat {dotted key: value} mapping."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", str(path))
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(f"[{ROOT}]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}", str(path)) from None
    out = {}
    for section in cp.sections():
        for name, text in cp.items(section):
            key = name if section == ROOT else f"{section}.{name}"
            out[key] = parse_value(key, text)
    return out


def parse_overrides(items) -> dict:
    """``["key=value", ...]`` into a typed mapping."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value", item)
        key, text = item.split("=", 1)
        key = key.strip()
        out[key] = parse_value(key, text)
    return out


def resolve(command: str | None = None, path=None, overrides=None) -> dict:
    """Defaults, then command defaults, then the file, then ``--set`` overrides."""
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(command, {}))
    if path is not None:
        cfg.update(read_file(path))
    cfg.update(parse_overrides(overrides))
    return cfg


def dumps(cfg: dict) -> str:
    """Render a resolved config back to the file format."""
    groups: dict = {}
    for key in sorted(cfg):
        section, _, name = key.rpartition(".")
        groups.setdefault(section, []).append((name, cfg[key]))

    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(repr(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    lines = [f"{name} = {fmt(v)}" for name, v in groups.pop("", [])]
    for section in sorted(groups):
        lines.append(f"\n[{section}]")
        lines.extend(f"{name} = {fmt(v)}" for name, v in groups[section])
    return "\n".join(lines) + "\n"

"""Run configuration: a flat `key = value` text format.

Lines are `key = value`, '#' starts a comment, blank lines are skipped.
Every key must be known; unknown keys are hard errors so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .model import TASKS, VARIANTS


class ConfigError(ValueError):
    pass


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "1": True, "0": False}


@dataclass
class RunConfig:
    task: str = "NET_REGRESSION"
    target: str = "demand"          # demand | hpwl | congestion
    variant: str = "FULL"
    seed: int = 0
    epochs: int = 300
    patience: int = 30
    lr: float = 1e-3
    layers: int = 3
    dim: int = 64
    mlp_depth: int = 2
    pd: bool = True
    lappe: bool = True
    deg_dist: bool = True
    k_hops: int = 6
    image_res: int = 8
    pe_dim: int = 10
    partition_target: int = 1000
    epsilon: float = 0.05
    netlist: str = ""
    targets: str = ""
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.target not in ("demand", "hpwl", "congestion"):
            raise ConfigError(f"unknown target {self.target!r}")
        if self.task == "NET_REGRESSION" and self.target == "congestion":
            raise ConfigError("net-level task cannot predict the cell target")
        if self.task in ("NODE_REGRESSION", "NODE_CLASSIFICATION") \
                and self.target != "congestion":
            raise ConfigError("node-level tasks predict the congestion target")
        if self.variant in ("BASE_PD", "BASE_PD_SVN", "FULL") and not self.pd:
            raise ConfigError(f"variant {self.variant} requires pd = true")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.partition_target < 1:
            raise ConfigError("partition_target must be >= 1")
        if not 0 <= self.epsilon < 1:
            raise ConfigError("epsilon must lie in [0, 1)")

    def require_paths(self) -> None:
        """Launch-time check that the input files exist."""
        for label, path in (("netlist", self.netlist), ("targets", self.targets)):
            if not path:
                raise ConfigError(f"config is missing the {label} path")
            if not os.path.exists(path):
                raise ConfigError(f"{label} file does not exist: {path}")

    def feature_kwargs(self) -> dict:
        return {"pd": self.pd, "lappe": self.lappe, "deg_dist": self.deg_dist,
                "k_hops": self.k_hops, "image_res": self.image_res,
                "pe_dim": self.pe_dim}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind == "int":
                values[key] = int(val)
            elif kind == "float":
                values[key] = float(val)
            elif kind == "bool":
                if val.lower() not in _BOOL_WORDS:
                    raise ValueError(val)
                values[key] = _BOOL_WORDS[val.lower()]
            else:
                values[key] = val
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {val!r} for {key}") from None
    return RunConfig(**values)


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def config_dict(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}

"""Experiment configuration: a flat, sectioned, human-editable key=value
format with sections ``[model] [federation] [schedule] [stopping] [output]``.

Parsing is fail-closed: unknown sections or keys are errors, and every
validation error names the offending ``section.key``.  ``serialize_config``
materializes defaults and emits sections and keys in a canonical order, so
parse -> serialize -> parse is the identity on the parsed object.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

__all__ = ["ExperimentConfig", "parse_config", "parse_config_text",
           "serialize_config", "ALGORITHMS"]

ALGORITHMS = ("fa-hmc", "fa-ld", "debias-fa-hmc", "single-hmc")
MODEL_KINDS = ("quadratic_fleet", "logistic_fleet")
SCHEDULE_KINDS = ("constant", "epoch_doubling")
STOP_RULES = ("fixed_iterations", "w2_threshold", "me_threshold")


@dataclass(frozen=True)
class ExperimentConfig:
    # [model]
    model_kind: str
    dim: int
    means: tuple = ()
    precisions: tuple = ()
    nodes: int = 0
    samples_per_node: int = 0
    prior_precision: float = 1.0
    feature_sigma: float = 1.0
    data_seed: int = 0
    # [federation]
    algorithm: str = "fa-hmc"
    weights: tuple | str = "equal"
    local_period: int = 1
    leapfrog_steps: int = 1
    rho: float = 1.0
    noise: str = "exact"
    master_seed: int = 0
    debias_anchor: str = "lagged"
    # [schedule]
    schedule_kind: str = "constant"
    eta: float = 0.0
    eta_init: float = 0.0
    t1: int = 0
    decay: float = 1.0 / math.sqrt(2.0)
    # [stopping]
    stop_rule: str = "fixed_iterations"
    iterations: int = 0
    threshold: float = 0.0
    max_iterations: int = 10_000_000
    # [output]
    directory: str = "out"
    record_every: int = 1
    save_snapshots: bool = False
    replicates: int = 1
    reference: str = ""
    burn_in_fraction: float = 0.5

    def __post_init__(self):
        _validate(self)

    @property
    def n_nodes(self) -> int:
        if self.model_kind == "quadratic_fleet":
            return len(self.means)
        return self.nodes


def _parse_float_list(raw: str, where: str) -> tuple:
    if raw.strip() == "":
        return ()
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {raw!r}", where) from None


_PARSERS = {
    "int": lambda raw, where: _parse_scalar(int, raw, where, "an integer"),
    "float": lambda raw, where: _parse_scalar(float, raw, where, "a number"),
    "str": lambda raw, where: raw,
    "floats": _parse_float_list,
    "bool": lambda raw, where: _parse_bool(raw, where),
}


def _parse_scalar(cast, raw, where, what):
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"expected {what}, got {raw!r}", where) from None


def _parse_bool(raw, where):
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}", where)


# section -> key -> (config attribute, type)
_SCHEMA = {
    "model": {
        "kind": ("model_kind", "str"),
        "dim": ("dim", "int"),
        "means": ("means", "floats"),
        "precisions": ("precisions", "floats"),
        "nodes": ("nodes", "int"),
        "samples_per_node": ("samples_per_node", "int"),
        "prior_precision": ("prior_precision", "float"),
        "feature_sigma": ("feature_sigma", "float"),
        "data_seed": ("data_seed", "int"),
    },
    "federation": {
        "algorithm": ("algorithm", "str"),
        "weights": ("weights", "str"),
        "local_period": ("local_period", "int"),
        "leapfrog_steps": ("leapfrog_steps", "int"),
        "rho": ("rho", "float"),
        "noise": ("noise", "str"),
        "master_seed": ("master_seed", "int"),
        "debias_anchor": ("debias_anchor", "str"),
    },
    "schedule": {
        "kind": ("schedule_kind", "str"),
        "eta": ("eta", "float"),
        "eta_init": ("eta_init", "float"),
        "t1": ("t1", "int"),
        "decay": ("decay", "float"),
    },
    "stopping": {
        "rule": ("stop_rule", "str"),
        "iterations": ("iterations", "int"),
        "threshold": ("threshold", "float"),
        "max_iterations": ("max_iterations", "int"),
    },
    "output": {
        "directory": ("directory", "str"),
        "record_every": ("record_every", "int"),
        "save_snapshots": ("save_snapshots", "bool"),
        "replicates": ("replicates", "int"),
        "reference": ("reference", "str"),
        "burn_in_fraction": ("burn_in_fraction", "float"),
    },
}


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from None

    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section)
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError("unknown key", f"{section}.{key}")
            attr, kind = schema[key]
            where = f"{section}.{key}"
            if attr == "weights":
                values[attr] = raw if raw.strip() == "equal" \
                    else _parse_float_list(raw, where)
            else:
                values[attr] = _PARSERS[kind](raw, where)

    if "model_kind" not in values:
        raise ConfigError("required", "model.kind")
    if "dim" not in values:
        raise ConfigError("required", "model.dim")
    return ExperimentConfig(**values)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.model_kind not in MODEL_KINDS:
        raise ConfigError(f"must be one of {MODEL_KINDS}", "model.kind")
    if cfg.dim < 1:
        raise ConfigError("must be >= 1", "model.dim")
    if cfg.model_kind == "quadratic_fleet":
        if not cfg.means:
            raise ConfigError("required for quadratic_fleet", "model.means")
        if len(cfg.precisions) != len(cfg.means):
            raise ConfigError("must match means in length", "model.precisions")
        if any(p <= 0 for p in cfg.precisions):
            raise ConfigError("must be positive", "model.precisions")
    else:
        if cfg.nodes < 1:
            raise ConfigError("required for logistic_fleet", "model.nodes")
        if cfg.samples_per_node < 1:
            raise ConfigError("required for logistic_fleet", "model.samples_per_node")
        if cfg.prior_precision < 0:
            raise ConfigError("must be nonnegative", "model.prior_precision")
        if cfg.feature_sigma <= 0:
            raise ConfigError("must be positive", "model.feature_sigma")

    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"must be one of {ALGORITHMS}", "federation.algorithm")
    if isinstance(cfg.weights, tuple):
        if len(cfg.weights) != cfg.n_nodes:
            raise ConfigError(f"needs {cfg.n_nodes} entries", "federation.weights")
        if any(w <= 0 for w in cfg.weights):
            raise ConfigError("must be positive", "federation.weights")
        if abs(math.fsum(cfg.weights) - 1.0) > 1e-12:
            raise ConfigError("must sum to 1", "federation.weights")
    if cfg.local_period < 1:
        raise ConfigError("must be >= 1", "federation.local_period")
    if cfg.leapfrog_steps < 1:
        raise ConfigError("must be >= 1", "federation.leapfrog_steps")
    if not 0.0 <= cfg.rho <= 1.0:
        raise ConfigError("must lie in [0, 1]", "federation.rho")
    if cfg.debias_anchor not in ("lagged", "current"):
        raise ConfigError("must be 'lagged' or 'current'", "federation.debias_anchor")
    _validate_noise(cfg.noise)

    if cfg.schedule_kind not in SCHEDULE_KINDS:
        raise ConfigError(f"must be one of {SCHEDULE_KINDS}", "schedule.kind")
    if cfg.schedule_kind == "constant" and cfg.eta <= 0:
        raise ConfigError("constant schedule requires eta > 0", "schedule.eta")
    if cfg.schedule_kind == "epoch_doubling":
        if cfg.eta_init <= 0:
            raise ConfigError("required for epoch_doubling", "schedule.eta_init")
        if cfg.t1 < 1:
            raise ConfigError("required for epoch_doubling", "schedule.t1")
        if not 0 < cfg.decay <= 1:
            raise ConfigError("must lie in (0, 1]", "schedule.decay")
        if cfg.t1 % cfg.local_period != 0:
            raise ConfigError("must be a multiple of federation.local_period",
                              "schedule.t1")

    if cfg.stop_rule not in STOP_RULES:
        raise ConfigError(f"must be one of {STOP_RULES}", "stopping.rule")
    if cfg.stop_rule == "fixed_iterations" and cfg.iterations < 1:
        raise ConfigError("fixed_iterations requires iterations >= 1",
                          "stopping.iterations")
    if cfg.stop_rule != "fixed_iterations" and cfg.threshold <= 0:
        raise ConfigError("threshold rules require threshold > 0",
                          "stopping.threshold")
    if cfg.max_iterations < 1:
        raise ConfigError("must be >= 1", "stopping.max_iterations")

    if cfg.record_every < 1:
        raise ConfigError("must be >= 1", "output.record_every")
    if cfg.replicates < 1:
        raise ConfigError("must be >= 1", "output.replicates")
    if not 0.0 <= cfg.burn_in_fraction < 1.0:
        raise ConfigError("must lie in [0, 1)", "output.burn_in_fraction")


def _validate_noise(spec: str) -> None:
    parts = spec.split(":")
    kind = parts[0]
    if kind == "exact":
        if len(parts) != 1:
            raise ConfigError("exact noise takes no parameter", "federation.noise")
        return
    if kind == "gaussian":
        if len(parts) != 2:
            raise ConfigError("expected gaussian:<variance>", "federation.noise")
        var = _parse_scalar(float, parts[1], "federation.noise", "a number")
        if var <= 0:
            raise ConfigError("variance must be positive", "federation.noise")
        return
    if kind == "minibatch":
        if len(parts) != 2:
            raise ConfigError("expected minibatch:<batch_size>", "federation.noise")
        batch = _parse_scalar(int, parts[1], "federation.noise", "an integer")
        if batch < 1:
            raise ConfigError("batch size must be >= 1", "federation.noise")
        return
    raise ConfigError(f"unknown noise kind {kind!r}", "federation.noise")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form with every field materialized."""
    lines = []
    for section, schema in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (attr, _) in schema.items():
            lines.append(f"{key} = {_format_value(getattr(cfg, attr))}")
        lines.append("")
    return "\n".join(lines)

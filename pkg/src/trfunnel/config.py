"""Run configuration: defaults, then a JSON/YAML file, then command-line flags."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .driver import SolverOptions
from .errors import ConfigError
from .models import RMForm
from .params import AlgorithmParams

#: Environment variable naming the default output directory.
OUTPUT_DIR_ENV = "TRFUNNEL_OUTPUT_DIR"

STRATEGIES = ("funnel", "filter")


@dataclass
class RunConfig:
    """Everything needed to reproduce one solver run.

    ``params`` holds :class:`AlgorithmParams` overrides by name. ``max_iter``
    and ``max_bb_evals`` are kept as top-level fields and take precedence
    over the same keys in ``params``.
    """

    problem: Optional[str] = None
    rm_form: str = "taylor"
    strategy: str = "funnel"
    params: dict = field(default_factory=dict)
    max_iter: int = 1000
    max_bb_evals: int = 1_000_000
    seed: int = 0
    trace_path: Optional[str] = None
    report_path: Optional[str] = None
    engine: str = "slsqp"
    record_timing: bool = False

    def __post_init__(self):
        self.validate()

    def algorithm_params(self):
        """Validated :class:`AlgorithmParams` with all overrides applied."""
        overrides = dict(self.params)
        overrides["max_iter"] = self.max_iter
        overrides["max_bb_evals"] = self.max_bb_evals
        return AlgorithmParams().replace(**overrides)

    def validate(self):
        try:
            self.rm_form = RMForm.parse(self.rm_form).value
        except ValueError as exc:
            raise ConfigError(f"rm_form: {exc}") from None
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {', '.join(STRATEGIES)}, got {self.strategy!r}")
        for name in ("max_iter", "max_bb_evals", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be a nonnegative integer, got {v!r}")
        self.algorithm_params()

    def to_options(self):
        return SolverOptions(rm_form=self.rm_form, strategy=self.strategy, params=self.algorithm_params(),
                             seed=self.seed, engine=self.engine, record_timing=self.record_timing)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


CONFIG_KEYS = frozenset(f.name for f in fields(RunConfig))
PARAM_KEYS = frozenset(f.name for f in fields(AlgorithmParams))


def load_config_file(path):
    """Read a JSON or YAML mapping; the format follows the file suffix.

    Top-level keys that are algorithm parameters are moved under ``params``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return normalise_mapping(data, source=str(path))


def normalise_mapping(data, source="config"):
    out = {"params": dict(data.get("params") or {})}
    for key, value in data.items():
        if key == "params":
            continue
        if key in CONFIG_KEYS:
            out[key] = value
        elif key in PARAM_KEYS:
            out["params"][key] = value
        else:
            raise ConfigError(f"{source}: unknown key {key!r}")
    for key in out["params"]:
        if key not in PARAM_KEYS:
            raise ConfigError(f"{source}: unknown parameter {key!r}")
    return out


def parse_param(text):
    """Parse ``key=value`` into ``(key, number)``.

    Raises
    ------
    ConfigError
        For a missing ``=``, an unknown key or a non-numeric value.
    """
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    if key not in PARAM_KEYS:
        raise ConfigError(f"unknown parameter {key!r}")
    raw = raw.strip()
    try:
        value = int(raw)
    except ValueError:
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"parameter {key} needs a number, got {raw!r}") from None
    return key, value


def build_config(file_values=None, cli_values=None):
    """Merge defaults, file values and CLI values (later wins) into a RunConfig."""
    merged = {"params": {}}
    for layer in (file_values or {}, cli_values or {}):
        params = dict(layer.get("params") or {})
        # Budget keys may arrive as parameters; they live at the top level.
        for key in ("max_iter", "max_bb_evals"):
            if key in params:
                merged[key] = params.pop(key)
        merged["params"].update(params)
        for key, value in layer.items():
            if key != "params" and value is not None:
                merged[key] = value
    return RunConfig(**merged)


def default_output_dir():
    return Path(os.environ.get(OUTPUT_DIR_ENV) or ".")

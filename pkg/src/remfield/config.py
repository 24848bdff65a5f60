"""Configuration management for remfield experiments."""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from dotenv import load_dotenv

from remfield.enumeration import DEFAULT_DELTA, DEFAULT_TOP_K, ReplicaSpec
from remfield.errors import ConfigError
from remfield.field import FieldModel
from remfield.models import ThermoSolution

# Load .env from the working directory and the user config directory
load_dotenv(Path.cwd() / ".env")
load_dotenv(Path.home() / ".remfield" / ".env")

EXPERIMENT_FILE = "experiment.json"
THERMO_FILE = "thermo.json"
RECORDS_FILE = "records.jsonl"
REPORT_FILE = "report.json"
TABLES_DIR = "tables"

ENTROPY_GRID_POINTS = 13
ENTROPY_GRID_FRACTION = 0.6  # middle share of [E_min, E_max]

DEFAULT_CONFIG = {
    "model": {"kind": "rademacher", "p": 0.5, "a": 1.0},
    "n": 24,
    "replicas": 400,
    "master_seed": 0,
    "betas": [0.25, 0.5, "bc", "1.5bc", "2bc"],
    "top_k": DEFAULT_TOP_K,
    "delta": DEFAULT_DELTA,
    "entropy_grid": None,  # None: spread over the middle of the band
    "output_dir": "runs/default",
    "workers": 1,
    # beta grid of the thermo/bound curves
    "beta_grid": {"start": 0.05, "stop": "3bc", "points": 50},
    "analysis": {
        "window": None,  # None: [-delta, delta]
        "overlap_tol": 0.1,
        "pd_betas": ["2bc"],
    },
}

ENV_OVERRIDES = {
    "REMFIELD_OUTPUT_DIR": ("output_dir", str),
    "REMFIELD_WORKERS": ("workers", int),
}


def env_defaults() -> dict:
    """Config values taken from REMFIELD_* environment variables."""
    values = {}
    for var, (key, cast) in ENV_OVERRIDES.items():
        raw = os.environ.get(var)
        if raw:
            try:
                values[key] = cast(raw)
            except ValueError:
                raise ConfigError(f"{var}={raw!r} is not a valid {cast.__name__}") from None
    return values


def _merge(base: dict, update: dict, where: str = "") -> dict:
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {where}{key!r}")
        if isinstance(base[key], dict) and key != "model":
            if not isinstance(value, dict):
                raise ConfigError(f"configuration key {where}{key!r} must be a mapping")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value
    return base


def load_config(path: Path | str | None = None) -> dict:
    """Defaults, then environment, then the document at `path` (JSON or YAML)."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    _merge(config, env_defaults())
    if path is None:
        return config

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} does not exist")
    try:
        with open(path) as f:
            document = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return _merge(config, document)


def save_config(config: dict, path: Path | str) -> None:
    """Write a configuration as an indented JSON document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(config, f, indent=2)
        f.write("\n")


def apply_overrides(config: dict, **flags) -> dict:
    """Copy of config with every flag that is not None set on top."""
    config = copy.deepcopy(config)
    for key, value in flags.items():
        if value is not None:
            _merge(config, {key: value})
    return config


# -- parsing helpers -----------------------------------------------------------


def _scalar(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_model(text: str) -> FieldModel:
    """Field model from a CLI string.

    Accepts a JSON record ({"kind": "gaussian", "stddev": 0.5}), a compact
    form such as ``rademacher:p=0.5,a=1`` or ``discrete:values=1/-1,probs=0.3/0.7``,
    or a bare kind such as ``zero``.
    """
    text = text.strip()
    if text.startswith("{"):
        try:
            return FieldModel.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid model record {text!r}: {e}") from e
    kind, _, rest = text.partition(":")
    data: dict = {"kind": kind}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"model parameter {item!r} must look like key=value")
        key = key.strip()
        if key in ("values", "probs"):
            data[key] = [_scalar(v) for v in value.split("/")]
        else:
            data[key] = _scalar(value)
    return FieldModel.from_dict(data)


def parse_list(text: str) -> list:
    """Comma-separated CLI list; entries stay strings when they are not numbers."""
    return [_scalar(v.strip()) for v in text.split(",") if v.strip()]


_SYMBOLS = ("emax", "emin", "bc")


def resolve_scalar(value, thermo: ThermoSolution) -> float:
    """A number, or a multiple of beta_c / E_max / E_min such as "2bc" or "emax*0.5"."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number or a symbolic value, got {value!r}")
    text = value.replace(" ", "").lower()
    symbols = {"bc": thermo.beta_c, "emax": thermo.e_max, "emin": thermo.e_min}
    for name in _SYMBOLS:
        if name in text:
            coeff = text.replace(name, "", 1).strip("*") or "1"
            try:
                return float(coeff) * symbols[name]
            except ValueError:
                break
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot interpret {value!r} as a number") from None


def split_seed(master_seed: int, replica: int) -> tuple[int, int]:
    """(seed_field, seed_energy) of replica `replica`.

    SeedSequence([master_seed, replica]) hashes both integers; its first two
    64-bit words are the field and energy seeds, so any replica can be rerun
    on its own.
    """
    state = np.random.SeedSequence([master_seed, replica]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


# -- experiment ----------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """A fully validated experiment."""

    model: FieldModel
    n: int
    replicas: int
    master_seed: int
    betas: list
    top_k: int
    delta: float
    entropy_grid: list | None
    output_dir: Path
    workers: int
    beta_grid: dict
    window: tuple[float, float] | None
    overlap_tol: float
    pd_betas: list

    @classmethod
    def from_dict(cls, config: dict) -> ExperimentConfig:
        model = config["model"]
        if isinstance(model, str):
            model = parse_model(model)
        elif isinstance(model, dict):
            model = FieldModel.from_dict(model)
        elif not isinstance(model, FieldModel):
            raise ConfigError(f"model must be a record or a string, got {model!r}")
        analysis = config.get("analysis", {})
        window = analysis.get("window")
        try:
            experiment = cls(
                model=model,
                n=int(config["n"]),
                replicas=int(config["replicas"]),
                master_seed=int(config["master_seed"]),
                betas=_as_list(config["betas"]),
                top_k=int(config["top_k"]),
                delta=float(config["delta"]),
                entropy_grid=None if config["entropy_grid"] is None else _as_list(config["entropy_grid"]),
                output_dir=Path(config["output_dir"]),
                workers=int(config["workers"]),
                beta_grid=dict(config["beta_grid"]),
                window=None if window is None else (float(window[0]), float(window[1])),
                overlap_tol=float(analysis.get("overlap_tol", 0.1)),
                pd_betas=_as_list(analysis.get("pd_betas", [])),
            )
        except (TypeError, ValueError, KeyError, IndexError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {e}") from e
        experiment.validate()
        return experiment

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if not self.betas:
            raise ConfigError("betas must not be empty")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ConfigError(f"analysis window needs a < b, got {list(self.window)}")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "n": self.n,
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "betas": list(self.betas),
            "top_k": self.top_k,
            "delta": self.delta,
            "entropy_grid": None if self.entropy_grid is None else list(self.entropy_grid),
            "output_dir": str(self.output_dir),
            "workers": self.workers,
            "beta_grid": dict(self.beta_grid),
            "analysis": {
                "window": None if self.window is None else list(self.window),
                "overlap_tol": self.overlap_tol,
                "pd_betas": list(self.pd_betas),
            },
        }

    # -- values that depend on the model's constants --

    def resolved_betas(self, thermo: ThermoSolution) -> list[float]:
        return [resolve_scalar(b, thermo) for b in self.betas]

    def resolved_pd_betas(self, thermo: ThermoSolution) -> list[float]:
        return [resolve_scalar(b, thermo) for b in self.pd_betas]

    def resolved_entropy_grid(self, thermo: ThermoSolution) -> list[float]:
        if self.entropy_grid is not None:
            return [resolve_scalar(e, thermo) for e in self.entropy_grid]
        width = thermo.e_max - thermo.e_min
        margin = 0.5 * (1.0 - ENTROPY_GRID_FRACTION) * width
        return np.linspace(thermo.e_min + margin, thermo.e_max - margin, ENTROPY_GRID_POINTS).tolist()

    def beta_grid_values(self, thermo: ThermoSolution) -> list[float]:
        start = resolve_scalar(self.beta_grid.get("start", 0.05), thermo)
        stop = resolve_scalar(self.beta_grid.get("stop", "3bc"), thermo)
        points = int(self.beta_grid.get("points", 50))
        if not (0.0 < start < stop and points >= 2 and math.isfinite(stop)):
            raise ConfigError(f"invalid beta grid {self.beta_grid!r}")
        return np.linspace(start, stop, points).tolist()

    def replica_spec(self, replica: int, thermo: ThermoSolution, n: int | None = None) -> ReplicaSpec:
        """Enumeration spec of replica `replica` (seeds from split_seed)."""
        seed_field, seed_energy = split_seed(self.master_seed, replica)
        return ReplicaSpec(
            model=self.model,
            n=self.n if n is None else n,
            seed_field=seed_field,
            seed_energy=seed_energy,
            betas=tuple(self.resolved_betas(thermo)),
            top_k=self.top_k,
            delta=self.delta,
            entropy_grid=tuple(self.resolved_entropy_grid(thermo)),
            replica=replica,
        )


def _as_list(value) -> list:
    if isinstance(value, str):
        return parse_list(value)
    return list(value)

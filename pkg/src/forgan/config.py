"""Experiment configuration: shipped presets, JSON config files and overrides.

A config document has the sections ``dataset``, ``hyper`` (or the string
``"tune"``), ``train``, ``eval``, ``ga`` and ``seed``; a preset may also carry a
``paper_scale`` block that is merged on top when larger budgets are requested.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .data import (LorenzParams, MackeyGlassParams, WindowedDataset, build_lorenz_dataset,
                   build_toy_bimodal, ingest_csv_series, integrate_mackey_glass, window_series)
from .exceptions import ConfigError, DataError
from .ga import GaConfig
from .model import HyperParams, TrainConfig
from .rng import substream

PRESET_NAMES = ("lorenz", "mackey-glass", "traffic", "toy-bimodal")
DATASET_KINDS = ("lorenz", "mackey-glass", "csv", "toy-bimodal")


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_preset(name: str) -> dict:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    text = resources.files("forgan").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


@dataclass
class DatasetSpec:
    kind: str
    n: int | None = None
    window: int | None = None
    params: dict = field(default_factory=dict)
    path: str | None = None
    column: str | int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ConfigError("a csv dataset needs a path (use --csv)")
        if self.n is not None and self.n < 1:
            raise ConfigError("dataset size must be positive")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be positive")

    def build(self, seed: int, default_window: int) -> tuple[WindowedDataset, np.ndarray | None]:
        """The windowed dataset and, for series kinds, the raw series."""
        rng = substream(seed, "dataset")
        window = self.window or default_window
        try:
            if self.kind == "lorenz":
                params = LorenzParams(**_tuples(self.params))
                return build_lorenz_dataset(params, self.n or 20000, rng), None
            if self.kind == "toy-bimodal":
                return build_toy_bimodal(self.n or 4000, rng, **self.params), None
            if self.kind == "mackey-glass":
                params = MackeyGlassParams(**self.params)
                series = integrate_mackey_glass(params, self.n or 20000)
                meta = {"generator": "mackey-glass", "params": asdict(params)}
            else:
                series = ingest_csv_series(self.path, self.column)
                meta = {"generator": "csv", "source": str(self.path), "column": self.column}
                if self.n:
                    series = series[:self.n]
        except TypeError as exc:
            raise ConfigError(f"bad {self.kind} dataset parameters: {exc}") from None
        return window_series(series, window, label=self.kind, meta=meta), series


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


@dataclass
class EvalConfig:
    samples_per_condition: int = 100
    runs: int = 100

    def __post_init__(self):
        if self.samples_per_condition < 1 or self.runs < 1:
            raise ConfigError("evaluation needs at least one sample and one run")


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    hyper: HyperParams | None
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    seed: int = 0
    name: str = ""

    @property
    def tune(self) -> bool:
        return self.hyper is None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"name", "dataset", "hyper", "train", "eval", "ga", "seed", "paper_scale"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config has no dataset section")
        try:
            seed = int(d.get("seed", 0))
            if seed < 0:
                raise ConfigError("seed must be non-negative")
            hyper = d.get("hyper", {})
            hyper = None if hyper == "tune" else HyperParams.from_dict(hyper)
            train = TrainConfig.from_dict({**d.get("train", {}), "seed": seed})
            ga = dict(d.get("ga", {}))
            ga["train"] = TrainConfig.from_dict({**ga.get("train", {}), "seed": seed})
            return cls(DatasetSpec(**d["dataset"]), hyper, train,
                       EvalConfig(**d.get("eval", {})), GaConfig(**{**ga, "seed": seed}),
                       seed, str(d.get("name", "")))
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "dataset": asdict(self.dataset),
            "hyper": "tune" if self.hyper is None else self.hyper.to_dict(),
            "train": self.train.to_dict(),
            "eval": asdict(self.eval),
            "ga": self.ga.to_dict(),
        }

    def build_dataset(self) -> tuple[WindowedDataset, np.ndarray | None]:
        # tuning may pick any searchable window up to 32 steps wide
        default = 32 if self.hyper is None else self.hyper.condition_len
        ds, series = self.dataset.build(self.seed, default)
        if self.hyper is not None and ds.condition_len < self.hyper.condition_len:
            raise DataError(f"dataset windows have {ds.condition_len} steps, "
                            f"hyperparameters need {self.hyper.condition_len}")
        return ds, series


def resolve_config(preset: str | None = None, config_path=None, paper_scale: bool = False,
                   overrides: dict | None = None) -> ExperimentConfig:
    """Preset, then config file, then paper-scale block, then explicit overrides."""
    doc: dict = {}
    if preset is not None:
        doc = load_preset(preset)
    if config_path is not None:
        doc = deep_merge(doc, load_config_file(config_path))
    if not doc:
        raise ConfigError("give --preset or --config")
    if paper_scale:
        doc = deep_merge(doc, doc.get("paper_scale", {}))
    doc.pop("paper_scale", None)
    if overrides:
        doc = deep_merge(doc, overrides)
    return ExperimentConfig.from_dict(doc)

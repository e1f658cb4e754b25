"""INI-style run configuration: one declarative file, CLI flags override."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .allocation import DYNAMIC_QUANTILE, POINT, STATIC_MAX, ThresholdPolicy
from .data import SplitSpec, SyntheticSpec
from .nets import ModelConfig
from .training import TrainConfig

POLICY_ALIASES = {"static": STATIC_MAX, "p99": DYNAMIC_QUANTILE, "point": POINT}


class ConfigFileError(ValueError):
    pass


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    split: SplitSpec = field(default_factory=SplitSpec)
    synthetic: dict = field(default_factory=dict)
    beams: int = 6
    policy_kind: str = DYNAMIC_QUANTILE
    quantile_level: float = 0.99
    output_format: str = "csv"
    eval_stride: int = 1
    workers: int = 1

    def model_config(self, family, likelihood, seed_offset=0) -> ModelConfig:
        kw = dict(self.model)
        kw["family"] = family
        kw["likelihood"] = likelihood
        kw["seed"] = int(kw.get("seed", 0)) + seed_offset
        return ModelConfig(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    def synthetic_spec(self, seed_offset=0, phase=0.0) -> SyntheticSpec:
        kw = dict(self.synthetic)
        kw["seed"] = int(kw.get("seed", 0)) + seed_offset
        kw.setdefault("diurnal_phase", 0.0)
        kw["diurnal_phase"] = float(kw["diurnal_phase"]) + phase
        return SyntheticSpec(**kw)

    def threshold_policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(kind=self.policy_kind, quantile_level=self.quantile_level)


_MODEL_INTS = ("context_len", "horizon", "spline_degree", "num_basis", "seed")
_MODEL_FLOATS = ("grid_min", "grid_max")
_TRAIN_INTS = ("epochs", "batch_size", "seed")
_TRAIN_FLOATS = ("learning_rate", "beta1", "beta2", "epsilon", "gradient_clip_norm")
_SYN_INTS = ("length", "seed")
_SYN_FLOATS = (
    "base_level",
    "diurnal_amplitude",
    "diurnal_phase",
    "weekly_amplitude",
    "burst_rate",
    "burst_shape",
    "burst_scale",
    "noise_scale",
    "noise_df",
)


def load_run_config(path=None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigFileError(f"cannot read config file {path}")
    if parser.has_section("model"):
        for key, value in parser.items("model"):
            if key in _MODEL_INTS:
                cfg.model[key] = int(value)
            elif key in _MODEL_FLOATS:
                cfg.model[key] = float(value)
            elif key == "hidden_sizes":
                cfg.model[key] = tuple(int(v) for v in value.split(",") if v.strip())
            elif key in ("family", "likelihood"):
                pass  # chosen per variant at train time
            else:
                raise ConfigFileError(f"unknown [model] key {key!r}")
    if parser.has_section("train"):
        for key, value in parser.items("train"):
            if key in _TRAIN_INTS:
                cfg.train[key] = int(value)
            elif key in _TRAIN_FLOATS:
                cfg.train[key] = float(value)
            else:
                raise ConfigFileError(f"unknown [train] key {key!r}")
    if parser.has_section("split"):
        cfg.split = SplitSpec(
            train_hours=parser.getint("split", "train_hours", fallback=360),
            test_hours=parser.getint("split", "test_hours", fallback=192),
        )
    if parser.has_section("synthetic"):
        for key, value in parser.items("synthetic"):
            if key == "beams":
                cfg.beams = int(value)
            elif key in _SYN_INTS:
                cfg.synthetic[key] = int(value)
            elif key in _SYN_FLOATS:
                cfg.synthetic[key] = float(value)
            elif key == "noise_family":
                cfg.synthetic[key] = value
            else:
                raise ConfigFileError(f"unknown [synthetic] key {key!r}")
    if parser.has_section("allocation"):
        kind = parser.get("allocation", "policy", fallback="p99")
        cfg.policy_kind = POLICY_ALIASES.get(kind, kind)
        cfg.quantile_level = parser.getfloat("allocation", "quantile", fallback=0.99)
    if parser.has_section("output"):
        cfg.output_format = parser.get("output", "format", fallback="csv")
        cfg.eval_stride = parser.getint("output", "eval_stride", fallback=1)
        cfg.workers = parser.getint("output", "workers", fallback=1)
    return cfg

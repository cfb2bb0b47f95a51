"""Run configuration: a flat ``key = value`` file with a closed set of keys.

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import kv
from .datagen import SbmSpec
from .nn import ModelConfig
from .operators import DEFAULT_PPR_ALPHA, DEFAULT_PPR_ITERATIONS, OperatorSpec, sign_specs
from .training import TrainConfig


class ConfigError(ValueError):
    pass


PATH_KEYS = ("edges", "features", "labels", "splits", "bundle_dir", "checkpoint_dir",
             "report", "predictions", "dataset_dir", "histogram")
GRAPH_KEYS = ("directed", "symmetrize", "num_nodes", "self_loops")
OPERATOR_KEYS = ("sign", "ppr_alpha", "ppr_iterations")
MODEL_KEYS = ("hidden_dim", "branch_layers", "head_layers", "head_hidden_dim", "activation",
              "batchnorm")
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
MISC_KEYS = ("runs", "num_bins", "nonzero_only", "eval_split", "threads")
SBM_KEYS = tuple(f"sbm.{k}" for k in ("num_nodes", "num_blocks", "p_in", "p_out", "feature_dim",
                                       "feature_noise", "split"))
KNOWN = set(PATH_KEYS + GRAPH_KEYS + OPERATOR_KEYS + MODEL_KEYS + TRAIN_KEYS + MISC_KEYS + SBM_KEYS)
_OPERATOR_KEY = re.compile(r"^operator\.(\d+)\.(kind|power|alpha|iterations|row_normalize)$")

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=dict)
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            values = kv.read(path)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except kv.KvError as exc:
            raise ConfigError(str(exc)) from None
        return cls.from_dict(values, path.parent)

    @classmethod
    def from_dict(cls, values: dict[str, str], base_dir=".") -> "RunConfig":
        unknown = [k for k in values if k not in KNOWN and not _OPERATOR_KEY.match(k)]
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(dict(values), Path(base_dir))
        cfg.operator_specs()  # fail fast on malformed operator keys
        return cfg

    # -- typed access ----------------------------------------------------------

    def has(self, key: str) -> bool:
        return key in self.values

    def get_str(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def get_int(self, key: str, default: int | None = None) -> int | None:
        if key not in self.values:
            return default
        try:
            return int(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {self.values[key]!r}") from None

    def get_float(self, key: str, default: float | None = None) -> float | None:
        if key not in self.values:
            return default
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {self.values[key]!r}") from None

    def get_bool(self, key: str, default: bool = False) -> bool:
        if key not in self.values:
            return default
        v = self.values[key].lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ConfigError(f"{key}: expected true/false, got {self.values[key]!r}")

    def path(self, key: str, *, must_exist: bool = False, required: bool = True) -> Path | None:
        if key not in self.values:
            if required:
                raise ConfigError(f"config key {key!r} is required for this command")
            return None
        p = Path(self.values[key])
        p = p if p.is_absolute() else self.base_dir / p
        if must_exist and not p.exists():
            raise ConfigError(f"{key}: {p} does not exist")
        return p

    # -- sections --------------------------------------------------------------

    def operator_specs(self) -> list[OperatorSpec]:
        """``sign = p,s,t`` shorthand first, then explicit ``operator.N.*`` in index order."""
        specs: list[OperatorSpec] = []
        if "sign" in self.values:
            try:
                p, s, t = (int(v) for v in self.values["sign"].split(","))
            except ValueError:
                raise ConfigError(f"sign: expected 'p,s,t', got {self.values['sign']!r}") from None
            specs += sign_specs(p, s, t,
                                alpha=self.get_float("ppr_alpha", DEFAULT_PPR_ALPHA),
                                iterations=self.get_int("ppr_iterations", DEFAULT_PPR_ITERATIONS))
        entries: dict[int, dict[str, str]] = {}
        for key, value in self.values.items():
            m = _OPERATOR_KEY.match(key)
            if m:
                entries.setdefault(int(m.group(1)), {})[m.group(2)] = value
        for n in sorted(entries):
            try:
                specs.append(OperatorSpec.from_dict(entries[n]))
            except ValueError as exc:
                raise ConfigError(f"operator.{n}: {exc}") from None
        return specs

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig()
        for f in fields(TrainConfig):
            if f.name in self.values:
                conv = {"int": self.get_int, "float": self.get_float}.get(str(f.type), self.get_str)
                setattr(cfg, f.name, conv(f.name))
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def model_config(self, num_classes: int) -> ModelConfig:
        d = ModelConfig(num_classes)
        cfg = ModelConfig(
            num_classes=num_classes,
            hidden_dim=self.get_int("hidden_dim", d.hidden_dim),
            branch_layers=self.get_int("branch_layers", d.branch_layers),
            head_layers=self.get_int("head_layers", d.head_layers),
            head_hidden_dim=self.get_int("head_hidden_dim", d.head_hidden_dim),
            activation=self.get_str("activation", d.activation),
            task=self.get_str("task", d.task),
            dropout=self.get_float("dropout", d.dropout),
            batchnorm=self.get_bool("batchnorm", d.batchnorm),
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def sbm_spec(self) -> SbmSpec:
        split = self.get_str("sbm.split", "0.6,0.2,0.2")
        try:
            fractions = tuple(float(v) for v in split.split(","))
        except ValueError:
            raise ConfigError(f"sbm.split: expected 'train,val,test', got {split!r}") from None
        spec = SbmSpec(num_nodes=self.get_int("sbm.num_nodes", 1000),
                       num_blocks=self.get_int("sbm.num_blocks", 2),
                       p_in=self.get_float("sbm.p_in", 0.1),
                       p_out=self.get_float("sbm.p_out", 0.01),
                       feature_dim=self.get_int("sbm.feature_dim", 16),
                       feature_noise=self.get_float("sbm.feature_noise", 1.0),
                       seed=self.get_int("seed", 0),
                       split_fractions=fractions)
        try:
            spec.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return spec

"""Experiment configuration: one YAML file drives a whole run.

Relative data and schema paths resolve against the config file's directory.
The config hash is the SHA-256 of the canonical JSON form of the settings
with defaults filled in (sorted keys, no whitespace), so YAML layout and
omitted defaults do not change it. Paths are hashed as written; the
manifest records digests of the input files themselves.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ValidationError
from .learners import LearnerConfig
from .rng import SUPPORTED_GENERATORS


class ConfigError(ValidationError):
    """The experiment config is malformed or inconsistent."""


GAUSSIAN_KEYS = {"class_separation", "subgroup_stddev", "point_stddev", "n_subgroups",
                 "points_per_subgroup_range", "label_noise"}
TRAINING_KEYS = {"epochs", "batch_size", "learning_rate", "l2_penalty"}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "rng": "philox",
    "dataset": {"source": "gaussian", "gaussian": {}},
    "split": {"val_fraction": 0.2},
    "subgroups": {"min_train_size": 0, "min_val_size": 1, "targets": None},
    "training": {},
    "ladder": [{"family": "logistic_regression"}, {"family": "mlp", "hidden_layers": [10]}],
    "alphas": [0.0, 1.0, 2.0],
    "repeats": 1,
    "theorem": {"gammas": [0.01, 0.02, 0.05], "ns": [1000, 2000], "trials": 1000,
                "k": 10, "tail_datasets": 10000, "include_disabled": True},
    "boundary": {"target": "all", "alpha": 2.0, "resolution": [200, 200]},
    "delta": {"ensemble_size": 5, "max_probes": None},
}


def builtin_schema_path(name: str) -> Path:
    ref = resources.files("poisonlab").joinpath("schemas", f"{name}.yaml")
    if not ref.is_file():
        raise ConfigError(f"no built-in schema named {name!r}")
    return Path(str(ref))


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        self.raw = _merge(DEFAULTS, self.raw or {})
        self._validate()

    # --- construction ---------------------------------------------------------

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls(data or {}, path.resolve().parent)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig({**self.raw, "seed": int(seed)}, self.base_dir)

    # --- validation -----------------------------------------------------------

    def _validate(self):
        r = self.raw
        unknown = set(r) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        if isinstance(r["seed"], bool) or not isinstance(r["seed"], int) or r["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        if r["rng"] not in SUPPORTED_GENERATORS:
            raise ConfigError(f"rng must be one of {SUPPORTED_GENERATORS}, got {r['rng']!r}")

        ds = r["dataset"]
        if ds.get("source") == "gaussian":
            bad = set(ds.get("gaussian") or {}) - GAUSSIAN_KEYS
            if bad:
                raise ConfigError(f"unknown gaussian keys: {sorted(bad)}")
        elif ds.get("source") == "tabular":
            if not ds.get("path") or not ds.get("schema"):
                raise ConfigError("tabular datasets need 'path' and 'schema'")
        else:
            raise ConfigError(f"dataset.source must be 'gaussian' or 'tabular', got {ds.get('source')!r}")

        vf = r["split"].get("val_fraction")
        if not isinstance(vf, (int, float)) or not 0 < vf < 1:
            raise ConfigError("split.val_fraction must lie strictly between 0 and 1")

        bad = set(r["training"]) - TRAINING_KEYS
        if bad:
            raise ConfigError(f"unknown training keys: {sorted(bad)}")
        if not isinstance(r["ladder"], list) or not r["ladder"]:
            raise ConfigError("ladder must be a non-empty list")
        try:
            ladder = self.ladder
        except (ValidationError, TypeError) as exc:
            raise ConfigError(f"invalid ladder entry: {exc}") from exc
        tags = [c.tag for c in ladder]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"duplicate ladder tags: {tags}")

        alphas = r["alphas"]
        if (not isinstance(alphas, list) or not alphas
                or any(isinstance(a, bool) or not isinstance(a, (int, float)) or a < 0 for a in alphas)):
            raise ConfigError("alphas must be a non-empty list of non-negative numbers")
        _positive_int(r["repeats"], "repeats")

        th = r["theorem"]
        _positive_int(th["trials"], "theorem.trials")
        _positive_int(th["tail_datasets"], "theorem.tail_datasets")
        if not all(isinstance(g, (int, float)) and 0 < g < 1 for g in th["gammas"]):
            raise ConfigError("theorem.gammas must lie in (0, 1)")
        for n in th["ns"]:
            _positive_int(n, "theorem.ns entry")
        if _positive_int(th["k"], "theorem.k") < 2:
            raise ConfigError("theorem.k must be at least 2")

        res = r["boundary"]["resolution"]
        if not (isinstance(res, list) and len(res) == 2 and all(isinstance(v, int) and v > 0 for v in res)):
            raise ConfigError("boundary.resolution must be two positive integers")
        if r["boundary"]["alpha"] < 0:
            raise ConfigError("boundary.alpha must be non-negative")
        if _positive_int(r["delta"]["ensemble_size"], "delta.ensemble_size") < 2:
            raise ConfigError("delta.ensemble_size must be at least 2")

    # --- accessors ------------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def source(self) -> str:
        return self.raw["dataset"]["source"]

    @property
    def gaussian_params(self) -> dict:
        params = dict(self.raw["dataset"].get("gaussian") or {})
        if "points_per_subgroup_range" in params:
            params["points_per_subgroup_range"] = tuple(params["points_per_subgroup_range"])
        return params

    @property
    def data_path(self) -> Path:
        return self._resolve(self.raw["dataset"]["path"])

    @property
    def schema_path(self) -> Path:
        name = self.raw["dataset"]["schema"]
        if "/" not in name and not name.endswith((".yaml", ".yml")):
            return builtin_schema_path(name)
        return self._resolve(name)

    def _resolve(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def ladder(self) -> list[LearnerConfig]:
        training = self.raw["training"]
        out = []
        for entry in self.raw["ladder"]:
            if not isinstance(entry, Mapping):
                raise ConfigError(f"ladder entries must be mappings, got {entry!r}")
            out.append(LearnerConfig.from_dict({**training, **entry}))
        return out

    @property
    def alphas(self) -> list[float]:
        return [float(a) for a in self.raw["alphas"]]

    def section(self, name: str) -> dict:
        return self.raw[name]

    # --- provenance -----------------------------------------------------------

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

#!/usr/bin/env python3
"""
Experiment configuration
Merges YAML defaults, the experiment block and a user config, then validates
everything up front so a bad setting fails before any training starts.
"""

import copy
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

from config.config import get_config, get_experiment_defaults, get_output_dir, load_yaml_file
from sparsegp.data import SubsetRule
from sparsegp.errors import UsageError
from sparsegp.kernels import JitterPolicy
from sparsegp.models import Method
from sparsegp.training import OptimizerConfig

logger = logging.getLogger(__name__)

EXPERIMENTS = ("fit", "sweep-add", "clump-study", "recover-zx", "regime-study", "ard-study")
INIT_SCHEMES = ("RANDOM_SUBSET", "KMEANS", "NESTED")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

COMMON_KEYS = {"seed", "jobs", "output_dir", "jitter", "optimizer", "logging", "data", "methods",
               "num_inducing", "init"}
EXPERIMENT_KEYS = {
    "fit": set(),
    "sweep-add": {"grid_points", "include_inducing"},
    "clump-study": {"clump_threshold"},
    "recover-zx": {"clump_threshold"},
    "regime-study": set(),
    "ard-study": {"full_subset", "frozen_iterations", "top_lengthscales"},
}
DATA_KEYS = {"dataset", "source", "subset", "standardize", "test"}


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base; non-dict values replace."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class SubsetConfig:
    n: int
    rule: SubsetRule = SubsetRule.FIRST
    seed: int = 0


@dataclass(frozen=True)
class DataConfig:
    dataset: Optional[str] = None
    source: Optional[Dict[str, Any]] = None
    subset: Optional[SubsetConfig] = None
    standardize: bool = False
    test: Optional[Dict[str, Any]] = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    data: DataConfig
    methods: Tuple[Method, ...]
    num_inducing: Tuple[int, ...]
    init: str
    optimizer: OptimizerConfig
    jitter: JitterPolicy
    seed: int
    jobs: int
    output_dir: str
    log_level: str
    options: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def single_num_inducing(self) -> Optional[int]:
        return self.num_inducing[0] if self.num_inducing else None

    def to_dict(self) -> Dict[str, Any]:
        """Echo of the fully merged configuration, as recorded in manifests."""
        echo = copy.deepcopy(self.raw)
        echo["experiment"] = self.name
        echo["seed"] = self.seed
        echo["jobs"] = self.jobs
        echo["output_dir"] = self.output_dir
        return echo


def _require_int(value, field_path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise UsageError(field_path, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise UsageError(field_path, f"must be >= {minimum}, got {value}")
    return value


def _require_positive(value, field_path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise UsageError(field_path, f"must be a positive number, got {value!r}")
    return float(value)


def _parse_methods(raw) -> Tuple[Method, ...]:
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise UsageError("methods", "must be a non-empty list of FULL, FITC, VFE, DTC")
    methods = []
    for i, value in enumerate(raw):
        try:
            methods.append(Method.parse(value))
        except ValueError as e:
            raise UsageError(f"methods[{i}]", str(e))
    return tuple(methods)


def _parse_num_inducing(name: str, raw) -> Tuple[int, ...]:
    if raw is None:
        if name == "recover-zx":
            return ()
        raise UsageError("num_inducing", "is required for this experiment")
    if name == "regime-study":
        values = raw if isinstance(raw, list) else [raw]
        if not values:
            raise UsageError("num_inducing", "needs at least one ladder entry")
        return tuple(_require_int(v, f"num_inducing[{i}]", 1) for i, v in enumerate(values))
    if name == "fit" and isinstance(raw, list):
        return tuple(_require_int(v, f"num_inducing[{i}]", 1) for i, v in enumerate(raw))
    return (_require_int(raw, "num_inducing", 1),)


def _parse_subset(raw, field_path: str) -> Optional[SubsetConfig]:
    if raw is None:
        return None
    if not isinstance(raw, dict) or "n" not in raw:
        raise UsageError(field_path, "must be a mapping with at least 'n'")
    try:
        rule = SubsetRule(str(raw.get("rule", "FIRST")).upper())
    except ValueError:
        raise UsageError(f"{field_path}.rule", f"must be one of {[r.value for r in SubsetRule]}")
    return SubsetConfig(n=_require_int(raw["n"], f"{field_path}.n", 1), rule=rule,
                        seed=_require_int(raw.get("seed", 0), f"{field_path}.seed"))


def _parse_data(raw) -> DataConfig:
    if not isinstance(raw, dict):
        raise UsageError("data", "must be a mapping")
    unknown = set(raw) - DATA_KEYS
    if unknown:
        raise UsageError(f"data.{sorted(unknown)[0]}", "unknown setting")
    dataset = raw.get("dataset")
    source = raw.get("source")
    if (dataset is None) == (source is None):
        raise UsageError("data", "set exactly one of 'dataset' (registry name) or 'source' (inline)")
    if dataset is not None:
        known = get_config("datasets").get("datasets", {})
        if dataset not in known:
            raise UsageError("data.dataset", f"unknown dataset {dataset!r}; known: {sorted(known)}")
    if source is not None and (not isinstance(source, dict) or "kind" not in source):
        raise UsageError("data.source", "must be a mapping with a 'kind'")
    test = raw.get("test")
    if test is not None and (not isinstance(test, dict) or "kind" not in test):
        raise UsageError("data.test", "must be a mapping with a 'kind'")
    return DataConfig(dataset=dataset, source=source, subset=_parse_subset(raw.get("subset"), "data.subset"),
                      standardize=bool(raw.get("standardize", False)), test=test)


def _parse_optimizer(raw) -> OptimizerConfig:
    if not isinstance(raw, dict):
        raise UsageError("optimizer", "must be a mapping")
    for key in raw:
        if key not in OptimizerConfig.__dataclass_fields__:
            raise UsageError(f"optimizer.{key}", "unknown setting")
    for key, minimum in (("max_iterations", 1), ("freeze_hyper_iterations", 0), ("restarts", 1), ("memory", 1)):
        if key in raw:
            _require_int(raw[key], f"optimizer.{key}", minimum)
    for key in ("objective_tolerance", "gradient_tolerance"):
        if raw.get(key) is not None:
            _require_positive(raw[key], f"optimizer.{key}")
    values = {k: v for k, v in raw.items() if k != "seed"}
    try:
        return OptimizerConfig.from_dict(values)
    except ValueError as e:
        raise UsageError("optimizer", str(e))


def _parse_jitter(raw) -> JitterPolicy:
    if not isinstance(raw, dict):
        raise UsageError("jitter", "must be a mapping")
    for key in raw:
        if key not in JitterPolicy.__dataclass_fields__:
            raise UsageError(f"jitter.{key}", "unknown setting")
        _require_positive(raw[key], f"jitter.{key}")
    try:
        return JitterPolicy(**{k: float(v) for k, v in raw.items()})
    except ValueError as e:
        raise UsageError("jitter", str(e))


def _parse_options(name: str, merged: Dict[str, Any]) -> Dict[str, Any]:
    options = {key: merged[key] for key in EXPERIMENT_KEYS[name] if key in merged}
    if "grid_points" in options:
        _require_int(options["grid_points"], "grid_points", 1)
    if "clump_threshold" in options:
        options["clump_threshold"] = _require_positive(options["clump_threshold"], "clump_threshold")
    if "frozen_iterations" in options:
        _require_int(options["frozen_iterations"], "frozen_iterations", 0)
    if "top_lengthscales" in options:
        _require_int(options["top_lengthscales"], "top_lengthscales", 1)
    if "full_subset" in options:
        options["full_subset"] = _parse_subset(options["full_subset"], "full_subset")
    if "include_inducing" in options:
        options["include_inducing"] = bool(options["include_inducing"])
    return options


def build_experiment_config(name: str, merged: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate an already-merged configuration mapping.

    Raises:
        UsageError: naming the dotted path of the first invalid field
    """
    if name not in EXPERIMENTS:
        raise UsageError("experiment", f"must be one of {list(EXPERIMENTS)}, got {name!r}")
    allowed = COMMON_KEYS | EXPERIMENT_KEYS[name]
    for key in merged:
        if key not in allowed:
            raise UsageError(key, f"unknown setting for experiment {name}")

    methods = _parse_methods(merged.get("methods", ["FULL", "FITC", "VFE"]))
    if name in ("sweep-add",) and any(not m.is_sparse for m in methods):
        raise UsageError("methods", "sweep-add needs sparse methods only")

    init = str(merged.get("init", "RANDOM_SUBSET")).upper()
    if init not in INIT_SCHEMES:
        raise UsageError("init", f"must be one of {list(INIT_SCHEMES)}, got {init!r}")
    if init == "NESTED" and name != "regime-study":
        raise UsageError("init", "NESTED initialization is only defined for regime-study")

    jobs = _require_int(merged.get("jobs", 1), "jobs")
    if jobs == 0 or jobs < -1:
        raise UsageError("jobs", f"must be >= 1 or -1 (all cores), got {jobs}")

    seed = _require_int(merged.get("seed", 0), "seed", 0)
    level = str((merged.get("logging") or {}).get("level", "INFO")).upper()
    if level not in LOG_LEVELS:
        raise UsageError("logging.level", f"must be one of {list(LOG_LEVELS)}, got {level!r}")

    return ExperimentConfig(
        name=name,
        data=_parse_data(merged.get("data")),
        methods=methods,
        num_inducing=_parse_num_inducing(name, merged.get("num_inducing")),
        init=init,
        optimizer=replace(_parse_optimizer(merged.get("optimizer", {})), seed=seed),
        jitter=_parse_jitter(merged.get("jitter", {})),
        seed=seed,
        jobs=jobs,
        output_dir=str(merged.get("output_dir") or get_output_dir()),
        log_level=level,
        options=_parse_options(name, merged),
        raw=merged,
    )


def load_experiment_config(name: str, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
                           ) -> ExperimentConfig:
    """
    Merge defaults, the experiment block, a user YAML file and CLI overrides.

    Args:
        name: experiment name
        config_path: optional user YAML file
        overrides: already-structured overrides (e.g. {'seed': 3})
    """
    if name not in EXPERIMENTS:
        raise UsageError("experiment", f"must be one of {list(EXPERIMENTS)}, got {name!r}")
    blocks = get_experiment_defaults(name)
    merged = deep_merge(blocks["defaults"], blocks["experiment"])
    merged["output_dir"] = get_output_dir(merged.get("output_dir"))
    if config_path:
        try:
            user = load_yaml_file(config_path)
        except (FileNotFoundError, ValueError) as e:
            raise UsageError("config", str(e))
        merged = deep_merge(merged, user)
    merged = deep_merge(merged, overrides or {})
    config = build_experiment_config(name, merged)
    logger.debug(f"Resolved {name} config: {config.to_dict()}")
    return config


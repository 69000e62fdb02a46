"""
Federation and experiment configuration, read from and written to TOML.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from enum import Enum, StrEnum
from importlib import resources
from pathlib import Path
from typing import Any

import toml

from fedsim.aggregation.simagg import AggregationConfig
from fedsim.data_processing.create_synthetic_task import TaskConfig
from fedsim.errors import ConfigParseError, FedSimError, InvalidConfig
from fedsim.privacy.dp_mechanisms import Mechanism, PrivacyConfig

DEFAULT_SPEC_RESOURCE = "training_config.toml"


class Aggregator(StrEnum):
    SIMAGG = "simagg"
    DP_SIMAGG = "dp_simagg"
    FEDAVG = "fedavg"


@dataclass(frozen=True)
class FederationConfig:
    n_collaborators: int = 33
    cohort_fraction: float = 0.2
    n_rounds: int = 20
    aggregator: Aggregator = Aggregator.SIMAGG
    privacy: PrivacyConfig | None = None
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    sampling_seed: int = 0
    unique_cohorts: bool = True
    parallel_trainers: bool = False

    def __post_init__(self):
        object.__setattr__(self, "aggregator", Aggregator(self.aggregator))
        if self.n_collaborators < 1:
            raise InvalidConfig(f"n_collaborators must be >= 1, got {self.n_collaborators}")
        if not 0 < self.cohort_fraction <= 1:
            raise InvalidConfig(f"cohort_fraction must lie in (0, 1], got {self.cohort_fraction}")
        if self.n_rounds < 1:
            raise InvalidConfig(f"n_rounds must be >= 1, got {self.n_rounds}")
        if self.sampling_seed < 0:
            raise InvalidConfig(f"sampling_seed must be >= 0, got {self.sampling_seed}")
        if self.aggregator is Aggregator.DP_SIMAGG and self.privacy is None:
            raise InvalidConfig("dp_simagg needs a privacy config")

    @property
    def cohort_size(self) -> int:
        # the small slack stops products like 0.3 * 10 = 3.0000000000000004 from rounding up
        return max(1, math.ceil(self.cohort_fraction * self.n_collaborators - 1e-9))

    @property
    def max_unique_cohorts(self) -> int:
        return math.comb(self.n_collaborators, self.cohort_size)


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _section(obj) -> dict[str, Any]:
    return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
            if getattr(obj, f.name) is not None and not dataclasses.is_dataclass(getattr(obj, f.name))}


def _build(cls, values: Mapping[str, Any] | None, section: str, **extra):
    values = dict(values or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigParseError(f"[{section}] has unknown keys: {', '.join(unknown)}")
    try:
        return cls(**values, **extra)
    except FedSimError:
        raise
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"[{section}]: {exc}") from exc


def federation_to_dict(cfg: FederationConfig, task: TaskConfig | None = None, **run_info) -> dict[str, Any]:
    """Resolved run config as written to a run directory's config.toml."""
    doc: dict[str, Any] = {}
    if run_info:
        doc["run"] = {k: _plain(v) for k, v in run_info.items()}
    doc["federation"] = _section(cfg)
    doc["aggregation"] = _section(cfg.aggregation)
    if cfg.privacy is not None:
        doc["privacy"] = _section(cfg.privacy)
    if task is not None:
        doc["task"] = _section(task)
    return doc


def federation_from_dict(doc: Mapping[str, Any]) -> tuple[FederationConfig, TaskConfig | None]:
    aggregation = _build(AggregationConfig, doc.get("aggregation"), "aggregation")
    privacy = _build(PrivacyConfig, doc["privacy"], "privacy") if "privacy" in doc else None
    federation = _build(FederationConfig, doc.get("federation"), "federation",
                        aggregation=aggregation, privacy=privacy)
    task = _build(TaskConfig, doc["task"], "task") if "task" in doc else None
    return federation, task


def write_toml(doc: Mapping[str, Any], path: Path) -> Path:
    path.write_text(toml.dumps(doc), encoding="utf-8")
    return path


def read_toml(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        return toml.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    except toml.TomlDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class SubRun:
    label: str
    dirname: str
    seed: int
    federation: FederationConfig


@dataclass(frozen=True)
class ExperimentSpec:
    federation: FederationConfig = field(default_factory=FederationConfig)
    aggregators: tuple[Aggregator, ...] = (Aggregator.DP_SIMAGG, Aggregator.SIMAGG)
    epsilons: tuple[float, ...] = (0.1, 1.0, 10.0)
    delta: float = 1e-5
    mechanism: Mechanism = Mechanism.GAMMA_ADDITIVE
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"
    task: TaskConfig = field(default_factory=TaskConfig)

    def __post_init__(self):
        object.__setattr__(self, "aggregators", tuple(Aggregator(a) for a in self.aggregators))
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.aggregators:
            raise InvalidConfig("at least one aggregator is required")
        if Aggregator.DP_SIMAGG in self.aggregators and not self.epsilons:
            raise InvalidConfig("dp_simagg needs at least one epsilon")
        if any(not (e > 0 and math.isfinite(e)) for e in self.epsilons):
            raise InvalidConfig(f"sweep epsilons must be positive, got {self.epsilons}")
        if not 0 < self.delta < 1:
            raise InvalidConfig(f"delta must lie in (0, 1), got {self.delta}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise InvalidConfig(f"seeds must be a non-empty list of distinct integers, got {self.seeds}")

    def with_seeds(self, seeds: tuple[int, ...]) -> ExperimentSpec:
        return dataclasses.replace(self, seeds=seeds)

    def sub_runs(self) -> Iterator[SubRun]:
        """One run per (aggregator, epsilon, seed); every configuration of a seed shares its cohorts and task."""
        for seed in self.seeds:
            for aggregator in self.aggregators:
                if aggregator is Aggregator.DP_SIMAGG:
                    for eps in self.epsilons:
                        privacy = PrivacyConfig(eps, self.delta, self.mechanism, seed)
                        federation = dataclasses.replace(self.federation, aggregator=aggregator,
                                                         sampling_seed=seed, privacy=privacy)
                        yield SubRun(config_label(aggregator, eps), f"dp_simagg_eps{eps:g}/seed_{seed}", seed, federation)
                else:
                    federation = dataclasses.replace(self.federation, aggregator=aggregator,
                                                     sampling_seed=seed, privacy=None)
                    yield SubRun(config_label(aggregator), f"{aggregator.value}/seed_{seed}", seed, federation)


def config_label(aggregator: Aggregator | str, epsilon: float | None = None) -> str:
    aggregator = Aggregator(aggregator)
    if aggregator is Aggregator.DP_SIMAGG:
        return f"DP-SimAgg (ε={epsilon:g})"
    return {"simagg": "SimAgg", "fedavg": "FedAvg"}[aggregator.value]


def experiment_from_dict(doc: Mapping[str, Any]) -> ExperimentSpec:
    unknown = sorted(set(doc) - {"experiment", "federation", "aggregation", "privacy", "task"})
    if unknown:
        raise ConfigParseError(f"unknown sections: {', '.join(unknown)}")
    experiment = dict(doc.get("experiment", {}))
    privacy = dict(doc.get("privacy", {}))
    unknown = sorted(set(privacy) - {"epsilons", "delta", "mechanism"})
    if unknown:
        raise ConfigParseError(f"[privacy] has unknown keys: {', '.join(unknown)}")

    aggregation = _build(AggregationConfig, doc.get("aggregation"), "aggregation")
    federation_values = dict(doc.get("federation", {}))
    for key in ("aggregator", "privacy", "aggregation", "sampling_seed"):
        if key in federation_values:
            raise ConfigParseError(f"[federation] key {key!r} is set per sub-run; use [experiment]/[privacy]")
    federation = _build(FederationConfig, federation_values, "federation", aggregation=aggregation)
    task = _build(TaskConfig, doc.get("task"), "task")
    return _build(ExperimentSpec, {**experiment, **privacy}, "experiment", federation=federation, task=task)


def load_experiment_spec(path: str | Path | None = None) -> ExperimentSpec:
    """Load an experiment spec; with no path, the packaged default is used."""
    if path is None:
        text = resources.files("fedsim.training").joinpath(DEFAULT_SPEC_RESOURCE).read_text(encoding="utf-8")
        return experiment_from_dict(toml.loads(text))
    return experiment_from_dict(read_toml(path))

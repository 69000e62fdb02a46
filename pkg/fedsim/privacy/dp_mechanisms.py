"""
Server-side differential privacy for SimAgg.

Noise is calibrated per round from the cohort's total sample count:

    sensitivity = 2 / (sum(N_i) * delta)
    scale       = sensitivity / epsilon
    shape       = 1 / cohort_size

and added to every collaborator's parameters at the server, after the
aggregation weights were computed from the clean parameters. Collaborators
never see any of this.

The sensitivity formula is taken as written even though it folds delta into
the sensitivity; it is not the usual L2 clipping bound.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from loguru import logger

from fedsim.aggregation.param_store import CollaboratorUpdate, ModelParams
from fedsim.aggregation.simagg import (
    AggregationConfig,
    AggregationWeights,
    aggregate,
    fused_weights,
    sample_weights,
    similarity_weights,
    sorted_cohort,
)
from fedsim.errors import InvalidBudget, InvalidCalibration, NonFiniteResult
from fedsim.privacy.gamma_sampler import sample_gamma
from fedsim.privacy.rng_streams import SEED_LIMIT, rng_stream_for, stream_id


class Mechanism(StrEnum):
    GAMMA_ADDITIVE = "gamma_additive"
    GAUSSIAN = "gaussian"
    DISTRIBUTED_LAPLACE = "distributed_laplace"
    NONE = "none"


@dataclass(frozen=True)
class PrivacyConfig:
    epsilon: float
    delta: float = 1e-5
    mechanism: Mechanism = Mechanism.GAMMA_ADDITIVE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidBudget(f"epsilon must be positive and finite, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidBudget(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise InvalidBudget(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class NoiseCalibration:
    sensitivity: float
    scale: float
    shape: float

    def to_dict(self) -> dict:
        return {"sensitivity": self.sensitivity, "scale": self.scale, "shape": self.shape}


def calibrate(total_samples: int, cohort_size: int, cfg: PrivacyConfig) -> NoiseCalibration:
    if not cfg.epsilon > 0:
        raise InvalidBudget(f"epsilon must be positive, got {cfg.epsilon}")
    if not 0 < cfg.delta < 1:
        raise InvalidBudget(f"delta must lie in (0, 1), got {cfg.delta}")
    if cohort_size < 1 or total_samples < cohort_size:
        raise ValueError(f"need total_samples >= cohort_size >= 1, got {total_samples} and {cohort_size}")
    sensitivity = 2.0 / (total_samples * cfg.delta)
    return NoiseCalibration(sensitivity=sensitivity, scale=sensitivity / cfg.epsilon, shape=1.0 / cohort_size)


def sample_noise(rng: np.random.Generator, cal: NoiseCalibration, mechanism: Mechanism, size: int) -> np.ndarray:
    if not (cal.scale > 0 and cal.shape > 0):
        raise InvalidCalibration(f"scale and shape must be positive, got {cal}")
    match Mechanism(mechanism):
        case Mechanism.GAMMA_ADDITIVE:
            return sample_gamma(rng, cal.shape, cal.scale, size)
        case Mechanism.GAUSSIAN:
            return rng.normal(0.0, cal.scale, size)
        case Mechanism.DISTRIBUTED_LAPLACE:
            return sample_gamma(rng, cal.shape, cal.scale, size) - sample_gamma(rng, cal.shape, cal.scale, size)
        case Mechanism.NONE:
            return np.zeros(size)


def perturb(update: CollaboratorUpdate, cal: NoiseCalibration, cfg: PrivacyConfig,
            rng_stream: np.random.Generator) -> CollaboratorUpdate:
    if cfg.mechanism is Mechanism.NONE:
        return update
    noise = sample_noise(rng_stream, cal, cfg.mechanism, update.params.total_len)
    noised = update.params.flat() + noise
    if not np.all(np.isfinite(noised)):
        raise NonFiniteResult(f"noise overflowed parameters of {update.collaborator_id}")
    return update.with_params(ModelParams.from_flat(update.params, noised))


@dataclass
class PrivacyLedger:
    """Advisory additive composition of the per-round budgets; no accountant guarantees."""

    epsilon_spent: float = 0.0
    delta_spent: float = 0.0
    rounds: int = 0

    def record_round(self, cfg: PrivacyConfig) -> None:
        self.epsilon_spent += cfg.epsilon
        self.delta_spent += cfg.delta
        self.rounds += 1

    def spent(self) -> dict:
        return {"epsilon": self.epsilon_spent, "delta": self.delta_spent, "rounds": self.rounds}


@dataclass(frozen=True)
class NoiseRecord:
    """What a DP round did, as written to the round log."""

    mechanism: Mechanism
    epsilon: float
    delta: float
    calibration: NoiseCalibration
    streams: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mechanism": str(self.mechanism),
            "epsilon": self.epsilon,
            "delta": self.delta,
            **self.calibration.to_dict(),
            "streams": dict(sorted(self.streams.items())),
        }


def dp_simagg_round(updates: Sequence[CollaboratorUpdate], agg_cfg: AggregationConfig, privacy: PrivacyConfig,
                    round_num: int) -> tuple[ModelParams, AggregationWeights, NoiseRecord]:
    ordered = sorted_cohort(updates)
    # weights come from the clean params; noise is added afterwards
    w = fused_weights(similarity_weights(ordered, agg_cfg), sample_weights(ordered))
    cal = calibrate(sum(up.sample_count for up in ordered), len(ordered), privacy)
    logger.debug("round {}: {} noise, sensitivity={:.6g} scale={:.6g} shape={:.4g}",
                 round_num, privacy.mechanism, cal.sensitivity, cal.scale, cal.shape)

    noised, streams = [], {}
    for up in ordered:
        streams[up.collaborator_id] = stream_id(round_num, up.collaborator_id, privacy.seed)
        noised.append(perturb(up, cal, privacy, rng_stream_for(round_num, up.collaborator_id, privacy.seed)))

    master = aggregate(noised, w, agg_cfg)
    return master, w, NoiseRecord(privacy.mechanism, privacy.epsilon, privacy.delta, cal, streams)

"""
SimAgg: similarity-weighted aggregation of collaborator parameters.

For a cohort with params p_c and sample counts N_c:

    p_hat  = mean(p_c)
    d_c    = |p_c - p_hat|_1
    sim_c  = sum(d_i) / (d_c + sim_epsilon)
    u_c    = sim_c / sum(sim_i)          (uniform when every d_c is zero)
    v_c    = N_c / sum(N_i)
    w_c    = (u_c + v_c) / sum(u_i + v_i)
    master = sum(w_c * p_c)

All sums run in ascending collaborator_id order so results are bitwise
reproducible whatever order the cohort arrives in.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, replace

from loguru import logger

from fedsim.aggregation.param_store import (
    CollaboratorUpdate,
    ModelParams,
    check_congruent,
    convex_combination,
    elementwise_mean,
    l1_distance,
    scale,
)
from fedsim.errors import DegenerateCohort, EmptyCohort, InvalidConfig, InvalidWeights, KeyMismatch

WEIGHT_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AggregationConfig:
    sim_epsilon: float = 1e-5
    literal_eq6: bool = False
    fallback_uniform: bool = True
    # Master is the plain mean of the (possibly noised) params; weights are still computed and logged.
    unweighted_master: bool = False

    def __post_init__(self):
        if not (self.sim_epsilon > 0 and math.isfinite(self.sim_epsilon)):
            raise InvalidConfig(f"sim_epsilon must be a positive finite number, got {self.sim_epsilon}")
        if self.literal_eq6 and self.unweighted_master:
            raise InvalidConfig("literal_eq6 and unweighted_master are mutually exclusive")


@dataclass(frozen=True)
class WeightRecord:
    collaborator_id: str
    sim: float | None = None
    u: float | None = None
    v: float | None = None
    w: float | None = None

    def to_dict(self, round_num: int | None = None) -> dict:
        record = {"collaborator_id": self.collaborator_id, "sim": self.sim, "u": self.u, "v": self.v, "w": self.w}
        if round_num is not None:
            record = {"round": round_num, **record}
        return record


@dataclass(frozen=True)
class AggregationWeights:
    """Per-collaborator weight records, sorted by collaborator_id."""

    records: tuple[WeightRecord, ...]

    def __post_init__(self):
        ids = [r.collaborator_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise KeyMismatch(f"duplicate collaborator ids in weights: {ids}")
        object.__setattr__(self, "records", tuple(sorted(self.records, key=lambda r: r.collaborator_id)))

    def __iter__(self) -> Iterator[WeightRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.collaborator_id for r in self.records)

    def column(self, name: str) -> dict[str, float]:
        values = {r.collaborator_id: getattr(r, name) for r in self.records}
        missing = [cid for cid, val in values.items() if val is None]
        if missing:
            raise KeyMismatch(f"weight column {name!r} is not set for {missing}")
        return values

    def to_records(self, round_num: int | None = None) -> list[dict]:
        return [r.to_dict(round_num) for r in self.records]

    @classmethod
    def from_records(cls, records: Sequence[Mapping]) -> AggregationWeights:
        return cls(tuple(
            WeightRecord(r["collaborator_id"], r.get("sim"), r.get("u"), r.get("v"), r.get("w")) for r in records
        ))


def sorted_cohort(updates: Sequence[CollaboratorUpdate]) -> list[CollaboratorUpdate]:
    if not updates:
        raise EmptyCohort("cohort has no updates")
    ordered = sorted(updates, key=lambda up: up.collaborator_id)
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.collaborator_id == cur.collaborator_id:
            raise KeyMismatch(f"collaborator {cur.collaborator_id} appears twice in the cohort")
    check_congruent([up.params for up in ordered])
    return ordered


def similarity_weights(updates: Sequence[CollaboratorUpdate], cfg: AggregationConfig = AggregationConfig()) -> AggregationWeights:
    ordered = sorted_cohort(updates)
    p_hat = elementwise_mean([up.params for up in ordered])
    distances = [l1_distance(up.params, p_hat) for up in ordered]
    total = 0.0
    for d in distances:
        total += d
    sims = [total / (d + cfg.sim_epsilon) for d in distances]
    sim_sum = 0.0
    for s in sims:
        sim_sum += s

    if sim_sum > 0:
        us = [s / sim_sum for s in sims]
    elif cfg.fallback_uniform:
        logger.debug("all {} collaborators coincide with the cohort mean, using uniform u", len(ordered))
        us = [1.0 / len(ordered)] * len(ordered)
    else:
        raise DegenerateCohort("every collaborator equals the cohort mean and fallback_uniform is off")

    return AggregationWeights(tuple(
        WeightRecord(up.collaborator_id, sim=s, u=u) for up, s, u in zip(ordered, sims, us)
    ))


def sample_weights(updates: Sequence[CollaboratorUpdate]) -> AggregationWeights:
    if not updates:
        raise EmptyCohort("cohort has no updates")
    ordered = sorted(updates, key=lambda up: up.collaborator_id)
    total = sum(up.sample_count for up in ordered)
    return AggregationWeights(tuple(
        WeightRecord(up.collaborator_id, v=up.sample_count / total) for up in ordered
    ))


def fused_weights(u: AggregationWeights, v: AggregationWeights) -> AggregationWeights:
    if u.ids != v.ids:
        raise KeyMismatch(f"u covers {u.ids}, v covers {v.ids}")
    u_col, v_col = u.column("u"), v.column("v")
    denom = 0.0
    for cid in u.ids:
        denom += u_col[cid] + v_col[cid]
    return AggregationWeights(tuple(
        replace(rec, v=v_col[rec.collaborator_id], w=(u_col[rec.collaborator_id] + v_col[rec.collaborator_id]) / denom)
        for rec in u.records
    ))


def _check_weights(ordered: Sequence[CollaboratorUpdate], w: AggregationWeights) -> dict[str, float]:
    cohort_ids = tuple(up.collaborator_id for up in ordered)
    if cohort_ids != w.ids:
        raise KeyMismatch(f"weights cover {w.ids}, cohort is {cohort_ids}")
    col = w.column("w")
    if any(val < 0 for val in col.values()):
        raise InvalidWeights(f"negative aggregation weight in {col}")
    if abs(math.fsum(col.values()) - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise InvalidWeights(f"aggregation weights sum to {math.fsum(col.values())}, expected 1")
    return col


def aggregate(updates: Sequence[CollaboratorUpdate], w: AggregationWeights,
              cfg: AggregationConfig = AggregationConfig()) -> ModelParams:
    ordered = sorted_cohort(updates)
    col = _check_weights(ordered, w)

    params = [up.params for up in ordered]
    if cfg.unweighted_master:
        return convex_combination(params, [1.0 / len(ordered)] * len(ordered))

    master = convex_combination(params, [col[up.collaborator_id] for up in ordered])
    if cfg.literal_eq6:
        master = scale(master, 1.0 / len(ordered))
    return master


def simagg_round(updates: Sequence[CollaboratorUpdate],
                 cfg: AggregationConfig = AggregationConfig()) -> tuple[ModelParams, AggregationWeights]:
    w = fused_weights(similarity_weights(updates, cfg), sample_weights(updates))
    return aggregate(updates, w, cfg), w


def fedavg_round(updates: Sequence[CollaboratorUpdate]) -> ModelParams:
    """Sample-weighted average, the usual federated-averaging baseline."""
    ordered = sorted_cohort(updates)
    v = sample_weights(ordered).column("v")
    return convex_combination([up.params for up in ordered], [v[up.collaborator_id] for up in ordered])


def fedavg_weights(updates: Sequence[CollaboratorUpdate]) -> AggregationWeights:
    """Weights record for a FedAvg round: v and w both equal the sample share."""
    return AggregationWeights(tuple(replace(rec, w=rec.v) for rec in sample_weights(updates)))

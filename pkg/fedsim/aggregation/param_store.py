"""
Model parameter snapshots and the elementwise arithmetic used by aggregation.

A ModelParams is an ordered mapping of group name -> flat float64 array. Values
are copied and frozen on construction, so instances can be shared freely.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from fedsim.errors import EmptyCohort, InvalidParams, NonFiniteResult, ShapeMismatch


class ModelParams(Mapping[str, np.ndarray]):
    __slots__ = ("_groups", "_total_len")

    def __init__(self, groups: Mapping[str, Iterable[float]] | Iterable[tuple[str, Iterable[float]]]):
        items = groups.items() if isinstance(groups, Mapping) else groups
        frozen: dict[str, np.ndarray] = {}
        for name, values in items:
            if not isinstance(name, str) or not name:
                raise InvalidParams(f"group names must be non-empty strings, got {name!r}")
            if name in frozen:
                raise InvalidParams(f"duplicate group name {name!r}")
            arr = np.array(values, dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise InvalidParams(f"group {name!r} contains NaN or Inf")
            arr.setflags(write=False)
            frozen[name] = arr
        self._groups = frozen
        self._total_len = sum(a.size for a in frozen.values())

    @classmethod
    def from_flat(cls, template: ModelParams, flat: np.ndarray) -> ModelParams:
        """Split a flat vector back into the groups of ``template``."""
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != template.total_len:
            raise ShapeMismatch(f"flat vector has {flat.size} elements, template needs {template.total_len}")
        out, offset = [], 0
        for name, arr in template.items():
            out.append((name, flat[offset:offset + arr.size]))
            offset += arr.size
        return cls(out)

    @classmethod
    def zeros_like(cls, template: ModelParams) -> ModelParams:
        return cls((name, np.zeros(arr.size)) for name, arr in template.items())

    def __getitem__(self, name: str) -> np.ndarray:
        return self._groups[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._groups)

    def __len__(self) -> int:
        return len(self._groups)

    def __repr__(self) -> str:
        layout = ", ".join(f"{n}[{a.size}]" for n, a in self._groups.items())
        return f"ModelParams({layout})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.is_congruent(other) and all(
            np.array_equal(a, b) for a, b in zip(self._groups.values(), other._groups.values())
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def total_len(self) -> int:
        return self._total_len

    @property
    def layout(self) -> tuple[tuple[str, int], ...]:
        return tuple((name, arr.size) for name, arr in self._groups.items())

    def is_congruent(self, other: ModelParams) -> bool:
        return self.layout == other.layout

    def flat(self) -> np.ndarray:
        if not self._groups:
            return np.zeros(0)
        return np.concatenate(list(self._groups.values()))

    def bitwise_equal(self, other: ModelParams) -> bool:
        """Stricter than ``==``: distinguishes -0.0 from 0.0."""
        return self.is_congruent(other) and self.flat().tobytes() == other.flat().tobytes()


@dataclass(frozen=True)
class CollaboratorUpdate:
    collaborator_id: str
    params: ModelParams
    sample_count: int
    metrics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.collaborator_id:
            raise InvalidParams("collaborator_id must be non-empty")
        if isinstance(self.sample_count, bool) or int(self.sample_count) != self.sample_count or self.sample_count < 1:
            raise InvalidParams(f"sample_count must be a positive integer, got {self.sample_count!r}")

    def with_params(self, params: ModelParams) -> CollaboratorUpdate:
        return CollaboratorUpdate(self.collaborator_id, params, self.sample_count, self.metrics)


def check_congruent(params: Sequence[ModelParams]) -> None:
    if not params:
        raise EmptyCohort("no parameter sets given")
    reference = params[0].layout
    for i, p in enumerate(params[1:], start=1):
        if p.layout != reference:
            raise ShapeMismatch(f"params #{i} has layout {p.layout}, expected {reference}")


def _checked(template: ModelParams, flat: np.ndarray) -> ModelParams:
    if not np.all(np.isfinite(flat)):
        raise NonFiniteResult("result contains non-finite values")
    return ModelParams.from_flat(template, flat)


def _stack(params: Sequence[ModelParams]) -> np.ndarray:
    check_congruent(params)
    return np.stack([p.flat() for p in params])


def elementwise_mean(params: Sequence[ModelParams]) -> ModelParams:
    """Arithmetic mean of congruent params, summed in the order given."""
    stacked = _stack(params)
    total = np.zeros(stacked.shape[1])
    for row in stacked:
        total += row / len(params)
    return _checked(params[0], np.clip(total, stacked.min(axis=0), stacked.max(axis=0)))


def convex_combination(params: Sequence[ModelParams], coeffs: Sequence[float]) -> ModelParams:
    """sum(c_i * p_i) for non-negative coeffs summing to one, accumulated in the order given.

    Accumulated as offsets from the first params and clipped to the elementwise
    [min, max] of the inputs, so identical inputs give that value back exactly.
    """
    stacked = _stack(params)
    if len(coeffs) != len(stacked):
        raise ShapeMismatch(f"{len(coeffs)} coefficients for {len(stacked)} params")
    ref = stacked[0]
    with np.errstate(over="ignore", invalid="ignore"):
        result = ref.copy()
        for row, c in zip(stacked[1:], coeffs[1:]):
            result += c * (row - ref)
        direct = np.zeros_like(ref)
        for row, c in zip(stacked, coeffs):
            direct += c * row
    # offsets overflow only when inputs span more than the float range
    result = np.where(np.isfinite(result), result, direct)
    return _checked(params[0], np.clip(result, stacked.min(axis=0), stacked.max(axis=0)))


def l1_distance(a: ModelParams, b: ModelParams) -> float:
    check_congruent([a, b])
    return float(np.sum(np.abs(a.flat() - b.flat())))


def scale_add(dst: ModelParams, src: ModelParams, coeff: float) -> ModelParams:
    """Return dst + coeff * src."""
    check_congruent([dst, src])
    with np.errstate(over="ignore", invalid="ignore"):
        result = dst.flat() + coeff * src.flat()
    return _checked(dst, result)


def scale(params: ModelParams, coeff: float) -> ModelParams:
    with np.errstate(over="ignore", invalid="ignore"):
        result = params.flat() * coeff
    return _checked(params, result)

#!/usr/bin/env python3
"""
Desk-scale stand-in for a partitioned segmentation dataset.

Each collaborator holds a linear-regression shard

    y = x . theta* + b_c + noise

with log-normally skewed shard sizes and a per-collaborator offset b_c whose
magnitude grows with ``heterogeneity``. Shards listed in ``adversarial`` are
drawn with theta* flipped.

A held-out validation volume ties the regression model back to segmentation:
every voxel carries a smooth feature vector, its reference label comes from
thresholding x . theta* at fixed quantiles, and a model's prediction
thresholds x . theta + b at the same cut points.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy import ndimage

from fedsim.aggregation.param_store import CollaboratorUpdate, ModelParams
from fedsim.errors import InvalidConfig
from fedsim.evaluation.seg_metrics import evaluate_volume_pair
from fedsim.evaluation.segvol import LabelVolume

TASK_DOMAIN = 0x7461736B

# Fraction of validation voxels at or above each cut: WT, TC, ET.
REGION_FRACTIONS = (0.30, 0.15, 0.07)


def collaborator_ids(n: int) -> list[str]:
    width = max(3, len(str(n)))
    return [f"col-{i:0{width}d}" for i in range(1, n + 1)]


@dataclass(frozen=True)
class TaskConfig:
    dim: int = 8
    heterogeneity: float = 0.0
    mean_shard_size: int = 400
    size_sigma: float = 0.2
    min_shard_size: int | None = None
    noise_std: float = 0.05
    bias_scale: float = 1.0
    local_steps: int = 20
    learning_rate: float = 0.1
    adversarial: tuple[int, ...] = ()
    volume_shape: tuple[int, int, int] = (24, 24, 24)
    feature_smoothing: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "adversarial", tuple(int(i) for i in self.adversarial))
        object.__setattr__(self, "volume_shape", tuple(int(n) for n in self.volume_shape))
        if self.dim < 1:
            raise InvalidConfig(f"dim must be >= 1, got {self.dim}")
        if not 0.0 <= self.heterogeneity <= 1.0:
            raise InvalidConfig(f"heterogeneity must lie in [0, 1], got {self.heterogeneity}")
        if self.mean_shard_size < 1 or self.local_steps < 0 or self.learning_rate <= 0:
            raise InvalidConfig("mean_shard_size >= 1, local_steps >= 0 and learning_rate > 0 are required")
        if len(self.volume_shape) != 3 or min(self.volume_shape) < 2:
            raise InvalidConfig(f"volume_shape must be three sizes >= 2, got {self.volume_shape}")

    @property
    def shard_floor(self) -> int:
        # keeps every local least-squares problem overdetermined
        return self.min_shard_size if self.min_shard_size is not None else max(10, 2 * (self.dim + 1))


@dataclass(frozen=True, eq=False)
class Shard:
    collaborator_id: str
    x: np.ndarray
    y: np.ndarray
    offset: float
    adversarial: bool = False

    @property
    def size(self) -> int:
        return int(self.y.size)


@dataclass(frozen=True, eq=False)
class ValidationVolume:
    features: np.ndarray  # (nx, ny, nz, dim)
    thresholds: tuple[float, float, float]  # WT, TC, ET cut points
    reference: LabelVolume

    def labels_for(self, scores: np.ndarray) -> np.ndarray:
        wt, tc, et = self.thresholds
        labels = np.zeros(scores.shape, dtype=np.uint8)
        labels[scores >= wt] = 2
        labels[scores >= tc] = 1
        labels[scores >= et] = 4
        return labels

    def predict(self, params: ModelParams) -> LabelVolume:
        scores = self.features @ params["weights"] + params["bias"][0]
        return LabelVolume(self.labels_for(scores), self.reference.spacing)


def model_template(dim: int) -> ModelParams:
    """Zero-initialised model: a weight vector plus a scalar intercept."""
    return ModelParams({"weights": np.zeros(dim), "bias": np.zeros(1)})


class SyntheticTrainer:
    """Local trainer: full-batch gradient descent on a shard's mean squared error."""

    def __init__(self, shards: dict[str, Shard], cfg: TaskConfig, validation: ValidationVolume | None = None):
        self.shards = shards
        self.cfg = cfg
        self.validation = validation

    def train(self, initial: ModelParams, shard_id: str, round_num: int) -> CollaboratorUpdate:
        shard = self.shards[shard_id]
        w = initial["weights"].copy()
        b = float(initial["bias"][0])
        n = shard.size
        for _ in range(self.cfg.local_steps):
            residual = shard.x @ w + b - shard.y
            w -= self.cfg.learning_rate * (shard.x.T @ residual) / n
            b -= self.cfg.learning_rate * float(residual.mean())
        loss = float(np.mean((shard.x @ w + b - shard.y) ** 2))
        params = ModelParams({"weights": w, "bias": [b]})
        return CollaboratorUpdate(shard_id, params, n, {"loss": loss})

    def pooled_loss(self, params: ModelParams, shard_ids: Iterable[str] | None = None) -> float:
        ids = sorted(self.shards) if shard_ids is None else sorted(shard_ids)
        sq_err, count = 0.0, 0
        for cid in ids:
            shard = self.shards[cid]
            sq_err += float(np.sum((shard.x @ params["weights"] + params["bias"][0] - shard.y) ** 2))
            count += shard.size
        return sq_err / count

    def evaluate(self, params: ModelParams) -> dict[str, float]:
        metrics = {"train_loss": self.pooled_loss(params)}
        if self.validation is not None:
            pred = self.validation.predict(params)
            for record in evaluate_volume_pair(pred, self.validation.reference):
                metrics.update(record.labelled())
        return metrics


@dataclass(frozen=True, eq=False)
class SyntheticTask:
    theta_star: np.ndarray
    shards: dict[str, Shard]
    trainer: SyntheticTrainer
    validation: ValidationVolume
    cfg: TaskConfig = field(default_factory=TaskConfig)

    @property
    def shard_sizes(self) -> dict[str, int]:
        return {cid: shard.size for cid, shard in self.shards.items()}

    def initial_params(self) -> ModelParams:
        return model_template(self.cfg.dim)

    def centralized_solution(self) -> ModelParams:
        """Least-squares fit on the pooled shards via the normal equations."""
        ids = sorted(self.shards)
        x = np.vstack([self.shards[cid].x for cid in ids])
        y = np.concatenate([self.shards[cid].y for cid in ids])
        design = np.hstack([x, np.ones((x.shape[0], 1))])
        coef = np.linalg.solve(design.T @ design, design.T @ y)
        return ModelParams({"weights": coef[:-1], "bias": coef[-1:]})


class SyntheticTaskCreator:
    def __init__(self, cfg: TaskConfig = TaskConfig()):
        self.cfg = cfg

    def shard_sizes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raw = np.exp(rng.normal(np.log(self.cfg.mean_shard_size), self.cfg.size_sigma, n))
        return np.maximum(np.rint(raw).astype(int), self.cfg.shard_floor)

    def create_shards(self, rng: np.random.Generator, ids: list[str], theta_star: np.ndarray) -> dict[str, Shard]:
        sizes = self.shard_sizes(rng, len(ids))
        shards = {}
        for index, (cid, size) in enumerate(zip(ids, sizes)):
            flipped = index in self.cfg.adversarial
            theta = -theta_star if flipped else theta_star
            offset = float(self.cfg.heterogeneity * self.cfg.bias_scale * rng.standard_normal())
            x = rng.standard_normal((size, self.cfg.dim))
            y = x @ theta + offset + self.cfg.noise_std * rng.standard_normal(size)
            shards[cid] = Shard(cid, x, y, offset, flipped)
        return shards

    def create_validation(self, rng: np.random.Generator, theta_star: np.ndarray) -> ValidationVolume:
        shape = self.cfg.volume_shape
        fields = []
        for _ in range(self.cfg.dim):
            smooth = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=self.cfg.feature_smoothing)
            fields.append((smooth - smooth.mean()) / smooth.std())
        features = np.stack(fields, axis=-1)
        scores = features @ theta_star
        cuts = tuple(float(np.quantile(scores, 1.0 - frac)) for frac in REGION_FRACTIONS)
        partial = ValidationVolume(features, cuts, LabelVolume(np.zeros(shape, dtype=np.uint8)))
        return ValidationVolume(features, cuts, LabelVolume(partial.labels_for(scores)))

    def create(self, n_collaborators: int, seed: int) -> SyntheticTask:
        if n_collaborators < 1:
            raise InvalidConfig(f"n_collaborators must be >= 1, got {n_collaborators}")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, TASK_DOMAIN])))
        ids = collaborator_ids(n_collaborators)
        theta_star = rng.standard_normal(self.cfg.dim)
        shards = self.create_shards(rng, ids, theta_star)
        validation = self.create_validation(rng, theta_star)
        logger.info("synthetic task: {} shards, {} samples total, dim={}, heterogeneity={}",
                    len(shards), sum(s.size for s in shards.values()), self.cfg.dim, self.cfg.heterogeneity)
        trainer = SyntheticTrainer(shards, self.cfg, validation)
        return SyntheticTask(theta_star, shards, trainer, validation, self.cfg)


def make_synthetic_task(n_collaborators: int, dim: int, heterogeneity: float, seed: int, **options) -> SyntheticTask:
    cfg = TaskConfig(dim=dim, heterogeneity=heterogeneity, **options)
    return SyntheticTaskCreator(cfg).create(n_collaborators, seed)

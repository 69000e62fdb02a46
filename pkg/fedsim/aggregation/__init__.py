from fedsim.aggregation.param_store import (
    CollaboratorUpdate,
    ModelParams,
    convex_combination,
    elementwise_mean,
    l1_distance,
    scale_add,
)
from fedsim.aggregation.simagg import (
    AggregationConfig,
    AggregationWeights,
    aggregate,
    fedavg_round,
    fused_weights,
    sample_weights,
    simagg_round,
    similarity_weights,
)

__all__ = [
    "AggregationConfig",
    "AggregationWeights",
    "CollaboratorUpdate",
    "ModelParams",
    "aggregate",
    "convex_combination",
    "elementwise_mean",
    "fedavg_round",
    "fused_weights",
    "l1_distance",
    "sample_weights",
    "scale_add",
    "simagg_round",
    "similarity_weights",
]

import numpy as np
import pytest

from fedsim.aggregation.param_store import CollaboratorUpdate, ModelParams


def make_update(cid: str, values, sample_count: int = 1, group: str = "g") -> CollaboratorUpdate:
    return CollaboratorUpdate(cid, ModelParams({group: np.atleast_1d(np.asarray(values, dtype=float))}), sample_count)


def random_params(rng: np.random.Generator, layout=(("conv", 3), ("dense", 5), ("bias", 1))) -> ModelParams:
    return ModelParams((name, rng.normal(size=n)) for name, n in layout)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)

"""
Gamma(shape, scale) sampling by Marsaglia-Tsang squeeze/rejection.

Shapes below one are handled with the boost Gamma(a) = Gamma(a + 1) * U**(1/a),
which is the regime the noise mechanisms live in (shape = 1/cohort_size).
"""

from __future__ import annotations

import numpy as np

from fedsim.errors import InvalidCalibration


def _standard_gamma_ge1(rng: np.random.Generator, alpha: float, size: int) -> np.ndarray:
    d = alpha - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        n = pending.size
        x = rng.standard_normal(n)
        v = 1.0 + c * x
        positive = v > 0
        v = np.where(positive, v, 1.0) ** 3
        u = rng.random(n)
        squeeze = u < 1.0 - 0.0331 * x**4
        with np.errstate(divide="ignore", invalid="ignore"):
            full = np.log(u) < 0.5 * x**2 + d * (1.0 - v + np.log(v))
        accept = positive & (squeeze | full)
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    return out


def sample_gamma(rng: np.random.Generator, shape: float, scale: float, size: int) -> np.ndarray:
    if not (shape > 0 and scale > 0):
        raise InvalidCalibration(f"gamma shape and scale must be positive, got shape={shape}, scale={scale}")
    if shape >= 1.0:
        return scale * _standard_gamma_ge1(rng, shape, size)
    boosted = _standard_gamma_ge1(rng, shape + 1.0, size)
    u = rng.random(size)
    return scale * boosted * u ** (1.0 / shape)

from fedsim.privacy.dp_mechanisms import (
    Mechanism,
    NoiseCalibration,
    PrivacyConfig,
    calibrate,
    dp_simagg_round,
    perturb,
)
from fedsim.privacy.rng_streams import rng_stream_for

__all__ = ["Mechanism", "NoiseCalibration", "PrivacyConfig", "calibrate", "dp_simagg_round", "perturb", "rng_stream_for"]

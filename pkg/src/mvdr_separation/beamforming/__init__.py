from .types import BeamformerWeights, CovarianceSet, MaskSet, RTFVector
from .covariance import estimate_covariances
from .rtf import normalize_rtf, rtf_angle, rtf_eigh, rtf_power_iteration
from .mvdr import apply_beamformer, mvdr_weights
from .numerics import NUMERICS, condition_numbers, load_if_singular

__all__ = [
    "MaskSet",
    "CovarianceSet",
    "RTFVector",
    "BeamformerWeights",
    "estimate_covariances",
    "rtf_power_iteration",
    "rtf_eigh",
    "rtf_angle",
    "normalize_rtf",
    "mvdr_weights",
    "apply_beamformer",
    "NUMERICS",
    "condition_numbers",
    "load_if_singular",
]

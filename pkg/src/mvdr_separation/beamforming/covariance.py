from __future__ import annotations

import numpy as np

from mvdr_separation.autodiff import ComplexTensor, einsum, stack
from mvdr_separation.beamforming.types import CovarianceSet, MaskSet
from mvdr_separation.dsp import Spectrogram
from mvdr_separation.enums import MaskKind
from mvdr_separation.errors import ShapeError, ValidationError


def estimate_covariances(
    spec: Spectrogram,
    masks: MaskSet,
    epsilon: float = 0.01,
    tie_distortion_covariances: bool = False,
) -> CovarianceSet:
    """
    掩蔽加权空间协方差 R = (1/T) Σ_t (ε + m) y yᴴ，之后做 Hermitian 对称化

    Args:
        spec: 观测谱 (T, F, M)
        masks: 掩蔽 (3, T, F, I)
        epsilon: 掩蔽下限 ε
        tie_distortion_covariances: 为 True 时 R_ñ 与 R_n 都由 m_n 估计

    Returns:
        CovarianceSet，matrices 形状 (3, F, I, M, M)
    """
    if epsilon < 0:
        raise ValidationError(f"epsilon 必须 >= 0: {epsilon}")
    if masks.masks.shape[1:3] != spec.data.shape[:2]:
        raise ShapeError("estimate_covariances", [masks.masks.shape, spec.data.shape], "(T, F) 不一致")

    y = spec.data
    outer = y[:, :, :, None] * np.conj(y[:, :, None, :])  # (T, F, M, M)
    num_frames = y.shape[0]

    weights = masks.masks
    if tie_distortion_covariances:
        distortion = masks.get(MaskKind.DISTORTION)
        weights = stack([masks.get(MaskKind.TARGET), distortion, distortion], axis=0)
    weights = (weights + epsilon) * (1.0 / num_frames)

    re = einsum("vtfi,tfmn->vfimn", weights, outer.real)
    im = einsum("vtfi,tfmn->vfimn", weights, outer.imag)
    re = (re + re.swapaxes(-1, -2)) * 0.5
    im = (im - im.swapaxes(-1, -2)) * 0.5
    return CovarianceSet(ComplexTensor(re, im), float(epsilon))

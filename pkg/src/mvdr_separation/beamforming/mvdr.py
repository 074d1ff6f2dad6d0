from __future__ import annotations

import numpy as np

from mvdr_separation.autodiff import ComplexTensor, as_complex, complex_einsum, complex_solve
from mvdr_separation.beamforming.numerics import NUMERICS, add_diagonal, load_if_singular, loading_amounts
from mvdr_separation.beamforming.types import BeamformerWeights, RTFVector
from mvdr_separation.dsp import Spectrogram
from mvdr_separation.errors import ShapeError

# 分母 ṽᴴ R_n⁻¹ ṽ 的最小模
DENOMINATOR_FLOOR = 1e-12


def _weights(r_noise: ComplexTensor, v: ComplexTensor):
    num = complex_solve(r_noise, v[..., None])[..., 0]  # (F, I, M)
    den = (v.conj() * num).sum(axis=-1)  # (F, I)
    return num, den


def mvdr_weights(r_noise: ComplexTensor, rtf: RTFVector) -> BeamformerWeights:
    """
    MVDR 系数 w = R_n⁻¹ ṽ / (ṽᴴ R_n⁻¹ ṽ)

    Args:
        r_noise: R_n (F, I, M, M)
        rtf: ṽ (F, I, M)
    """
    r_noise = as_complex(r_noise)
    v = rtf.values
    if r_noise.shape[:-1] != v.shape or r_noise.shape[-1] != r_noise.shape[-2]:
        raise ShapeError("mvdr_weights", [r_noise.shape, v.shape])

    r_noise = load_if_singular(r_noise, "mvdr_weights")
    num, den = _weights(r_noise, v)
    small = np.abs(den.numpy()) < DENOMINATOR_FLOOR
    count = int(np.count_nonzero(small))
    if count:
        NUMERICS.record("mvdr_weights.denominator_loading", count)
        amounts = np.where(small, loading_amounts(r_noise.numpy()), 0.0)
        num, den = _weights(add_diagonal(r_noise, amounts), v)

    den = den[..., None]
    return BeamformerWeights(num / den, rtf.reference_channel)


def apply_beamformer(weights: BeamformerWeights, spec: Spectrogram) -> ComplexTensor:
    """
    d̂[t, f, i] = Σ_m conj(w[f, i, m]) y[t, f, m]

    Returns:
        (T, F, I) 复数张量
    """
    w = weights.values
    if w.ndim != 3 or w.shape[0] != spec.num_bins or w.shape[-1] != spec.num_channels:
        raise ShapeError("apply_beamformer", [w.shape, spec.data.shape])
    return complex_einsum("fim,tfm->tfi", w.conj(), spec.data)

"""
RTF 估计

- rtf_power_iteration: 训练用，全部在计算图上（Φ = R_ñ⁻¹ R_d 的幂迭代）
- rtf_eigh: 评估用，广义 Hermitian 特征分解，不参与反向传播
"""

from __future__ import annotations

from typing import Union

import numpy as np
from scipy import linalg as sla

from mvdr_separation.autodiff import ComplexTensor, Tensor, as_complex, complex_matmul, complex_solve
from mvdr_separation.beamforming.numerics import NUMERICS, load_if_singular, load_if_singular_numpy
from mvdr_separation.beamforming.types import RTFVector
from mvdr_separation.errors import EigenSolverError, ShapeError, ValidationError
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)

# |v_r|² 相对 ‖v‖² 低于该值时视为退化，回退到 u_r
DEGENERATE_RATIO = 1e-20

MatrixLike = Union[ComplexTensor, np.ndarray]


def _check_pair(name: str, r_target, r_noise, reference_channel: int) -> int:
    if r_target.shape != r_noise.shape or len(r_target.shape) < 3 or r_target.shape[-1] != r_target.shape[-2]:
        raise ShapeError(name, [r_target.shape, r_noise.shape], "需要相同形状的 (F, I, M, M)")
    channels = r_target.shape[-1]
    if not 0 <= reference_channel < channels:
        raise ValidationError(f"{name}: 参考通道 {reference_channel} 超出范围 [0, {channels})")
    return channels


def _unit_vector(shape, channels: int, reference_channel: int) -> np.ndarray:
    u = np.zeros(tuple(shape) + (channels,))
    u[..., reference_channel] = 1.0
    return u


def normalize_rtf(v: ComplexTensor, reference_channel: int, where: str) -> ComplexTensor:
    """
    ṽ = v / v_r，参考分量精确为 1

    |v_r| 过小的频点以 u_r 代替 v，并记录回退次数。
    """
    values = v.numpy()
    ref_power = np.abs(values[..., reference_channel]) ** 2
    total_power = np.sum(np.abs(values) ** 2, axis=-1)
    degenerate = (ref_power <= DEGENERATE_RATIO * total_power) | (total_power == 0)
    unit = _unit_vector(values.shape[:-1], values.shape[-1], reference_channel)
    count = int(np.count_nonzero(degenerate))
    if count:
        NUMERICS.record(f"{where}.degenerate_normalization", count)
        keep = (~degenerate).astype(np.float64)[..., None]
        v = v * keep + ComplexTensor(Tensor(unit * (1.0 - keep)))
    ref = v[..., reference_channel:reference_channel + 1]
    normalized = v / ref
    others = 1.0 - unit
    return ComplexTensor(normalized.re * others + unit, normalized.im * others)


def rtf_power_iteration(
    r_target: ComplexTensor,
    r_noise: ComplexTensor,
    reference_channel: int = 0,
    eta_max: int = 3,
) -> RTFVector:
    """
    幂迭代 RTF

    Φ = R_ñ⁻¹ R_d; v ← u_r; 重复 eta_max 次 v ← Φ v; v ← R_ñ v; ṽ = v / v_r

    Args:
        r_target: R_d (F, I, M, M)
        r_noise: R_ñ (F, I, M, M)
        reference_channel: 参考通道 r
        eta_max: 迭代次数
    """
    if eta_max < 1:
        raise ValidationError(f"eta_max 必须 >= 1: {eta_max}")
    r_target, r_noise = as_complex(r_target), as_complex(r_noise)
    channels = _check_pair("rtf_power_iteration", r_target, r_noise, reference_channel)

    r_noise = load_if_singular(r_noise, "rtf_power_iteration")
    phi = complex_solve(r_noise, r_target)
    u = _unit_vector(r_target.shape[:-2], channels, reference_channel)[..., None]
    v = as_complex(Tensor(u))
    for _ in range(eta_max):
        v = complex_matmul(phi, v)
    v = complex_matmul(r_noise, v)[..., 0]
    return RTFVector(normalize_rtf(v, reference_channel, "rtf_power_iteration"), reference_channel)


def rtf_eigh(r_target: MatrixLike, r_noise: MatrixLike, reference_channel: int = 0) -> RTFVector:
    """
    特征分解 RTF: v = R_ñ · MaxEig{R_ñ⁻¹ R_d}

    使用广义 Hermitian 特征问题 R_d x = λ R_ñ x，结果为常量（不在计算图上）。

    Raises:
        EigenSolverError: 特征分解失败
    """
    target = r_target.numpy() if isinstance(r_target, ComplexTensor) else np.asarray(r_target, np.complex128)
    noise = r_noise.numpy() if isinstance(r_noise, ComplexTensor) else np.asarray(r_noise, np.complex128)
    channels = _check_pair("rtf_eigh", target, noise, reference_channel)

    noise = load_if_singular_numpy(noise, "rtf_eigh")
    batch_shape = target.shape[:-2]
    flat_target = target.reshape(-1, channels, channels)
    flat_noise = noise.reshape(-1, channels, channels)
    vectors = np.empty((flat_target.shape[0], channels), dtype=np.complex128)
    for k in range(flat_target.shape[0]):
        a = 0.5 * (flat_target[k] + flat_target[k].conj().T)
        b = 0.5 * (flat_noise[k] + flat_noise[k].conj().T)
        try:
            _, eigvecs = sla.eigh(a, b, subset_by_index=[channels - 1, channels - 1])
        except (np.linalg.LinAlgError, ValueError) as e:
            raise EigenSolverError(f"rtf_eigh: 第 {k} 个频点/说话人特征分解失败 ({e})") from e
        vectors[k] = b @ eigvecs[:, 0]

    v = ComplexTensor.from_numpy(vectors.reshape(batch_shape + (channels,)))
    return RTFVector(normalize_rtf(v, reference_channel, "rtf_eigh"), reference_channel)


def rtf_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """两个 RTF 方向之间的夹角 (rad)，沿最后一维"""
    inner = np.abs(np.sum(np.conj(a) * b, axis=-1))
    norms = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    return np.arccos(np.clip(inner / norms, 0.0, 1.0))

"""
CI-SDR（卷积传递函数不变 SDR）

估计信号补零到 L + K - 1（源信号完全卷积的长度），用最小二乘 FIR 滤波器 â
把干声源投影到估计上，再计算估计相对于滤波后源信号的 SDR。
符号取反后即 BSS Eval SDR 指标。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg as sla
from scipy import signal as sps

from mvdr_separation.autodiff import Tensor, concatenate, convolve, no_grad, solve, solve_toeplitz
from mvdr_separation.enums import WienerSolver
from mvdr_separation.errors import NumericalError, ShapeError, ValidationError
from mvdr_separation.losses.sdr import SignalLike, _paired, as_signal, mean_over_speakers, ratio_to_db

# Tikhonov 正则: r₀ 的相对量
REGULARIZATION = 1e-8
# 滤波后源信号的最小能量
MIN_TARGET_ENERGY = 1e-12


@dataclass
class FilterEstimate:
    """Wiener-Hopf 解 â_τ (长度 taps)"""
    taps: Tensor

    def numpy(self) -> np.ndarray:
        return self.taps.numpy()


def source_autocorrelation(source: np.ndarray, taps: int) -> np.ndarray:
    """r[τ] = Σ_ℓ s_ℓ s_{ℓ-τ}, τ = 0..taps-1"""
    length = source.shape[0]
    full = sps.correlate(source, source, mode="full")
    return full[length - 1:length - 1 + taps]


def _pad_estimate(estimate: Tensor, full_length: int) -> Tensor:
    length = estimate.shape[0]
    if length > full_length:
        raise ShapeError("ci_sdr", [estimate.shape], f"估计长度超过 {full_length}")
    if length == full_length:
        return estimate
    return concatenate([estimate, Tensor(np.zeros(full_length - length))])


def wiener_hopf_filter(
    source: SignalLike,
    estimate: SignalLike,
    taps: int = 512,
    solver: Union[WienerSolver, str] = WienerSolver.DIRECT_NORMAL_EQUATIONS,
) -> FilterEstimate:
    """
    最小二乘 FIR: â = argmin Σ_ℓ (Σ_τ s_{ℓ-τ} a_τ - d̂_ℓ)²

    Args:
        source: 干声源 s（长度 L，常量）
        estimate: 估计 d̂（长度 <= L + taps - 1，可微）
        taps: 滤波器长度 K
        solver: 直接解正规方程 或 Levinson-Durbin

    Raises:
        ValidationError: L <= taps
    """
    s = as_signal(source).data
    e = as_signal(estimate)
    solver = WienerSolver(solver)
    length = s.shape[0]
    if length <= taps:
        raise ValidationError(f"信号长度 {length} 必须大于滤波器长度 {taps}")
    padded = _pad_estimate(e, length + taps - 1)

    # p[τ] = Σ_ℓ d̂_ℓ s_{ℓ-τ}
    cross = convolve(padded, Tensor(s[::-1].copy()))[length - 1:length - 1 + taps]
    r = source_autocorrelation(s, taps)
    loaded = r.copy()
    loaded[0] += REGULARIZATION * r[0]

    if solver is WienerSolver.TOEPLITZ_LEVINSON:
        coeffs = solve_toeplitz(loaded, cross)
    else:
        matrix = sla.toeplitz(loaded)
        coeffs = solve(Tensor(matrix), cross.reshape(taps, 1)).reshape(taps)
    return FilterEstimate(coeffs)


def ci_sdr_pair(
    source: SignalLike,
    estimate: SignalLike,
    taps: int = 512,
    solver: Union[WienerSolver, str] = WienerSolver.DIRECT_NORMAL_EQUATIONS,
    log_floor: float = 1e-10,
    speaker: Optional[int] = None,
) -> Tensor:
    """
    单对 CI-SDR 损失 (dB): 10·log10(Σ(s * â - d̂)² / Σ(s * â)²)

    Raises:
        NumericalError: 滤波后源信号能量 < 1e-12
    """
    s = as_signal(source)
    e = as_signal(estimate)
    if not np.any(s.data != 0):
        raise ValidationError(f"源信号全为零 (说话人 {speaker})")
    length = s.shape[0]
    fir = wiener_hopf_filter(s, e, taps, solver)
    target = convolve(s, fir.taps)
    energy = (target * target).sum()
    if energy.item() < MIN_TARGET_ENERGY:
        label = "" if speaker is None else f"说话人 {speaker} "
        raise NumericalError(f"{label}滤波后源信号能量 {energy.item():.3e} 过小，â 退化")
    residual = target - _pad_estimate(e, length + taps - 1)
    return ratio_to_db((residual * residual).sum() / energy, log_floor)


def ci_sdr_loss(
    sources,
    estimates,
    taps: int = 512,
    solver: Union[WienerSolver, str] = WienerSolver.DIRECT_NORMAL_EQUATIONS,
    log_floor: float = 1e-10,
) -> Tensor:
    """多说话人 CI-SDR（恒等分配），参考为干声源"""
    sources, estimates = _paired("ci_sdr_loss", sources, estimates)
    values = [
        ci_sdr_pair(s, e, taps, solver, log_floor, speaker=i)
        for i, (s, e) in enumerate(zip(sources, estimates))
    ]
    return mean_over_speakers(values)


def bss_eval_sdr(source: SignalLike, estimate: SignalLike, taps: int = 512, log_floor: float = 1e-10) -> float:
    """BSS Eval SDR (dB)，即 CI-SDR 损失取负"""
    with no_grad():
        return -ci_sdr_pair(source, estimate, taps, log_floor=log_floor).item()

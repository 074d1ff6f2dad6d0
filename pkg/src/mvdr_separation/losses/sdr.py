"""
F-SDR / SDR / SI-SDR

单对 (目标, 估计) 的损失返回 dB 值（负 SDR，越小越好）；
多说话人损失为各说话人的平均，即 (10/I) Σ_i log10(·)。
"""

from __future__ import annotations

from typing import List, Sequence, Union

import numpy as np

from mvdr_separation.autodiff import ComplexTensor, Tensor, as_complex, as_tensor, clamp_min, log10, no_grad, stack
from mvdr_separation.dsp import Waveform
from mvdr_separation.errors import ShapeError, ValidationError

# 分母下限（SI-SDR 中缩放后的目标能量）
_TINY = 1e-30

SignalLike = Union[Waveform, Tensor, np.ndarray]


def as_signal(value: SignalLike) -> Tensor:
    """Waveform / 数组 / Tensor -> 一维 Tensor"""
    if isinstance(value, Waveform):
        value = value.samples
    value = as_tensor(value)
    if value.ndim != 1:
        raise ShapeError("signal", [value.shape], "需要一维信号")
    return value


def split_speakers(values) -> List:
    """(I, L) 数组/Tensor 或 (T, F, I) ComplexTensor 拆成每个说话人的列表"""
    if isinstance(values, ComplexTensor) or (isinstance(values, np.ndarray) and np.iscomplexobj(values)):
        return [values[:, :, i] for i in range(values.shape[-1])]
    if isinstance(values, (Tensor, np.ndarray)):
        if values.ndim == 1:
            return [values]
        return [values[i] for i in range(values.shape[0])]
    return list(values)


def check_target_energy(target: np.ndarray, label: str = "") -> None:
    if not np.any(np.abs(target) > 0):
        raise ValidationError(f"目标信号{label}全为零，比值无定义")


def ratio_to_db(ratio: Tensor, log_floor: float) -> Tensor:
    """10·log10(max(ratio, log_floor))"""
    return log10(clamp_min(ratio, log_floor)) * 10.0


def mean_over_speakers(values: Sequence[Tensor]) -> Tensor:
    return stack(list(values)).mean()


# -----------------------------
# 单对损失
# -----------------------------
def f_sdr_pair(target, estimate, log_floor: float = 1e-10) -> Tensor:
    """
    频域 SDR: 10·log10(mean_{t,f} |d - d̂|² / max(|d|², floor))

    Args:
        target: (T, F) 复数谱 d
        estimate: (T, F) 复数张量 d̂
    """
    d, e = as_complex(target), as_complex(estimate)
    if d.shape != e.shape:
        raise ShapeError("f_sdr", [d.shape, e.shape])
    check_target_energy(d.numpy())
    error = (d - e).abs2()
    per_bin = error / clamp_min(d.abs2(), log_floor)
    return ratio_to_db(per_bin.mean(), log_floor)


def sdr_pair(target: SignalLike, estimate: SignalLike, log_floor: float = 1e-10) -> Tensor:
    """时域 SDR: 10·log10(Σ(d - d̂)² / Σd²)"""
    d, e = as_signal(target), as_signal(estimate)
    if d.shape != e.shape:
        raise ShapeError("sdr", [d.shape, e.shape])
    check_target_energy(d.data)
    diff = d - e
    ratio = (diff * diff).sum() / (d * d).sum()
    return ratio_to_db(ratio, log_floor)


def si_sdr_pair(target: SignalLike, estimate: SignalLike, log_floor: float = 1e-10) -> Tensor:
    """
    尺度不变 SDR

    â = ⟨d, d̂⟩ / ⟨d, d⟩；比值 Σ(â d - d̂)² / Σ(â d)²
    """
    d, e = as_signal(target), as_signal(estimate)
    if d.shape != e.shape:
        raise ShapeError("si_sdr", [d.shape, e.shape])
    check_target_energy(d.data)
    scale = (d * e).sum() / (d * d).sum()
    scaled = d * scale
    residual = scaled - e
    scaled_energy = (scaled * scaled).sum()
    residual_energy = (residual * residual).sum()
    if scaled_energy.item() <= residual_energy.item() * log_floor:
        # 估计为零或与目标正交：比值不低于 1/log_floor，取最差值 -10·log10(log_floor)，梯度为零
        return (e * 0.0).sum() - 10.0 * np.log10(log_floor)
    ratio = residual_energy / clamp_min(scaled_energy, _TINY)
    return ratio_to_db(ratio, log_floor)


# -----------------------------
# 多说话人损失（恒等分配）
# -----------------------------
def _paired(name: str, targets, estimates):
    targets, estimates = split_speakers(targets), split_speakers(estimates)
    if len(targets) != len(estimates) or not targets:
        raise ValidationError(f"{name}: 目标数 {len(targets)} 与估计数 {len(estimates)} 不一致")
    for i, t in enumerate(targets):
        data = t.numpy() if isinstance(t, (Tensor, ComplexTensor)) else getattr(t, "samples", t)
        check_target_energy(np.asarray(data), f" (说话人 {i})")
    return targets, estimates


def f_sdr_loss(targets, estimates, log_floor: float = 1e-10) -> Tensor:
    targets, estimates = _paired("f_sdr_loss", targets, estimates)
    return mean_over_speakers([f_sdr_pair(t, e, log_floor) for t, e in zip(targets, estimates)])


def sdr_loss(targets, estimates, log_floor: float = 1e-10) -> Tensor:
    targets, estimates = _paired("sdr_loss", targets, estimates)
    return mean_over_speakers([sdr_pair(t, e, log_floor) for t, e in zip(targets, estimates)])


def si_sdr_loss(targets, estimates, log_floor: float = 1e-10) -> Tensor:
    targets, estimates = _paired("si_sdr_loss", targets, estimates)
    return mean_over_speakers([si_sdr_pair(t, e, log_floor) for t, e in zip(targets, estimates)])


def si_sdr_db(target: SignalLike, estimate: SignalLike, log_floor: float = 1e-10) -> float:
    """SI-SDR 指标 (dB)，即 SI-SDR 损失取负"""
    with no_grad():
        return -si_sdr_pair(target, estimate, log_floor).item()

"""
STFT 分析 / 合成

- 分析窗：周期 Hann 窗
- 两端各做 frame_size - shift 个样本的反射填充，帧数 T = ceil(L / shift)
- 合成：irfft 后加窗重叠相加，再除以窗平方和
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy import signal as sps

from mvdr_separation.autodiff import ComplexTensor, Tensor, as_tensor, einsum, overlap_add
from mvdr_separation.dsp.audio import AnyWave, MultichannelWaveform, as_multichannel
from mvdr_separation.errors import ShapeError, ValidationError

# 合成时窗平方和的下限
_WINDOW_FLOOR = 1e-10


@dataclass(frozen=True)
class StftConfig:
    """STFT 配置"""
    frame_size: int = 256
    shift: int = 64
    window: str = "hann"
    pad_mode: str = "reflect"

    def __post_init__(self):
        n, s = int(self.frame_size), int(self.shift)
        if n <= 0 or n & (n - 1):
            raise ValidationError(f"frame_size 必须是 2 的幂: {self.frame_size}")
        if not 0 < s <= n:
            raise ValidationError(f"shift 必须满足 0 < shift <= frame_size: {self.shift}")
        if self.window != "hann":
            raise ValidationError(f"不支持的窗函数: {self.window}")
        if self.pad_mode != "reflect":
            raise ValidationError(f"不支持的填充方式: {self.pad_mode}")

    @property
    def num_bins(self) -> int:
        return self.frame_size // 2 + 1

    @property
    def pad(self) -> int:
        return self.frame_size - self.shift

    def num_frames(self, length: int) -> int:
        return -(-int(length) // self.shift)

    def window_array(self) -> np.ndarray:
        return _hann(self.frame_size)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StftConfig":
        return cls(**data)


@lru_cache(maxsize=16)
def _hann(frame_size: int) -> np.ndarray:
    window = sps.get_window("hann", frame_size, fftbins=True)
    window.setflags(write=False)
    return window


@lru_cache(maxsize=16)
def _window_sum(frame_size: int, shift: int, num_frames: int) -> np.ndarray:
    window = _hann(frame_size)
    total = (num_frames - 1) * shift + frame_size
    wsum = np.zeros(total)
    for t in range(num_frames):
        wsum[t * shift:t * shift + frame_size] += window ** 2
    wsum = np.maximum(wsum, _WINDOW_FLOOR)
    wsum.setflags(write=False)
    return wsum


@lru_cache(maxsize=16)
def _synthesis_basis(frame_size: int) -> Tuple[np.ndarray, np.ndarray]:
    """irfft 的实数矩阵形式: frame = Re(X) @ C - Im(X) @ S"""
    bins = frame_size // 2 + 1
    k = np.arange(bins)[:, None]
    n = np.arange(frame_size)[None, :]
    weight = np.full((bins, 1), 2.0)
    weight[0] = 1.0
    weight[-1] = 1.0
    angle = 2.0 * np.pi * k * n / frame_size
    cos_basis = weight * np.cos(angle) / frame_size
    sin_basis = weight * np.sin(angle) / frame_size
    cos_basis.setflags(write=False)
    sin_basis.setflags(write=False)
    return cos_basis, sin_basis


@dataclass(frozen=True)
class Spectrogram:
    """
    复数 STFT

    Attributes:
        data: (T, F, M) complex128
        config: 生成该谱的 STFT 配置
        original_length: 原始波形长度
        sample_rate: 原始采样率
    """
    data: np.ndarray
    config: StftConfig
    original_length: int
    sample_rate: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 3:
            raise ShapeError("Spectrogram", [data.shape], "需要 (T, F, M)")
        if data.shape[1] != self.config.num_bins:
            raise ShapeError("Spectrogram", [data.shape], f"频点数应为 {self.config.num_bins}")
        object.__setattr__(self, "data", data)

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_bins(self) -> int:
        return self.data.shape[1]

    @property
    def num_channels(self) -> int:
        return self.data.shape[2]

    def channel(self, index: int) -> np.ndarray:
        if not 0 <= index < self.num_channels:
            raise ValidationError(f"通道索引 {index} 超出范围 [0, {self.num_channels})")
        return self.data[:, :, index]

    def with_data(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(data, self.config, self.original_length, self.sample_rate)


# -----------------------------
# 分析
# -----------------------------
def frame_signal(samples: np.ndarray, config: StftConfig) -> np.ndarray:
    """
    反射填充并分帧

    Args:
        samples: (M, L)

    Returns:
        (M, T, N) 未加窗的帧
    """
    length = samples.shape[-1]
    num_frames = config.num_frames(length)
    padded = np.pad(samples, ((0, 0), (config.pad, config.pad)), mode="reflect")
    needed = (num_frames - 1) * config.shift + config.frame_size
    if padded.shape[-1] < needed:
        padded = np.pad(padded, ((0, 0), (0, needed - padded.shape[-1])))
    index = np.arange(num_frames)[:, None] * config.shift + np.arange(config.frame_size)[None, :]
    return padded[:, index]


def stft(wave: AnyWave, config: Optional[StftConfig] = None) -> Spectrogram:
    """
    多通道 STFT

    Raises:
        ValidationError: 波形短于一个帧移
    """
    config = config or StftConfig()
    multi = as_multichannel(wave)
    samples = multi.as_array()
    length = samples.shape[-1]
    if length < config.shift:
        raise ValidationError(f"波形长度 {length} 小于帧移 {config.shift}")
    frames = frame_signal(samples, config) * config.window_array()
    spec = np.fft.rfft(frames, axis=-1)  # (M, T, F)
    return Spectrogram(spec.transpose(1, 2, 0), config, length, multi.sample_rate)


# -----------------------------
# 合成
# -----------------------------
def _check_target_length(spec_frames: int, config: StftConfig, target_length: int) -> None:
    limit = spec_frames * config.shift
    if not 0 < target_length <= limit:
        raise ValidationError(f"target_length={target_length} 超出可重建长度 {limit}")


def istft_array(data: np.ndarray, config: StftConfig, target_length: int) -> np.ndarray:
    """
    逆 STFT（numpy）

    Args:
        data: (T, F, C) 复数谱

    Returns:
        (C, target_length)
    """
    if data.ndim != 3 or data.shape[1] != config.num_bins:
        raise ShapeError("istft", [data.shape], f"频点数应为 {config.num_bins}")
    num_frames = data.shape[0]
    _check_target_length(num_frames, config, target_length)
    frames = np.fft.irfft(data, n=config.frame_size, axis=1) * config.window_array()[None, :, None]
    total = (num_frames - 1) * config.shift + config.frame_size
    out = np.zeros((data.shape[2], total))
    for t in range(num_frames):
        out[:, t * config.shift:t * config.shift + config.frame_size] += frames[t].T
    out /= _window_sum(config.frame_size, config.shift, num_frames)
    return out[:, config.pad:config.pad + target_length]


def istft(spec: Spectrogram, target_length: Optional[int] = None) -> MultichannelWaveform:
    length = spec.original_length if target_length is None else int(target_length)
    samples = istft_array(spec.data, spec.config, length)
    return MultichannelWaveform.from_array(samples, spec.sample_rate)


def istft_tensor(estimate: ComplexTensor, config: StftConfig, target_length: int) -> Tensor:
    """
    可微逆 STFT

    Args:
        estimate: (T, F, I) 复数张量
        config: STFT 配置
        target_length: 输出长度

    Returns:
        (I, target_length) 实数 Tensor
    """
    if estimate.ndim != 3 or estimate.shape[1] != config.num_bins:
        raise ShapeError("istft_tensor", [estimate.shape], f"频点数应为 {config.num_bins}")
    num_frames = estimate.shape[0]
    _check_target_length(num_frames, config, target_length)
    cos_basis, sin_basis = _synthesis_basis(config.frame_size)
    frames = einsum("tfi,fn->tin", estimate.re, cos_basis) - einsum("tfi,fn->tin", estimate.im, sin_basis)
    frames = frames * config.window_array()
    signal = overlap_add(frames, config.shift)
    signal = signal / _window_sum(config.frame_size, config.shift, num_frames)
    return signal[:, config.pad:config.pad + target_length]


# -----------------------------
# 特征与辅助
# -----------------------------
def log_feature(spec: Spectrogram, channel: int = 0) -> np.ndarray:
    """log(1 + |y|)，形状 (T, F)"""
    return np.log1p(np.abs(spec.channel(channel)))


def apply_mask(mask: Union[Tensor, np.ndarray], spec: Spectrogram, channel: int = 0) -> ComplexTensor:
    """
    掩蔽增强: m ⊙ y_r

    Args:
        mask: (T, F, I) 目标掩蔽
        spec: 观测谱
        channel: 参考通道 r

    Returns:
        (T, F, I) 复数张量
    """
    mask = as_tensor(mask)
    ref = spec.channel(channel)
    if mask.ndim != 3 or mask.shape[:2] != ref.shape:
        raise ShapeError("apply_mask", [mask.shape, ref.shape])
    return ComplexTensor(mask * ref.real[:, :, None], mask * ref.imag[:, :, None])


def spectrogram_energy(spec: Spectrogram) -> np.ndarray:
    """
    用窗补偿后的谱能量估计波形能量（逐通道）

    单边谱中 0 与 N/2 以外的频点计两次，再除以 N 与每个样本的平均窗平方和。
    """
    n = spec.config.frame_size
    power = np.abs(spec.data) ** 2
    weights = np.full(spec.num_bins, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    frame_energy = np.einsum("tfm,f->m", power, weights) / n
    window_gain = float(np.sum(spec.config.window_array() ** 2)) / spec.config.shift
    return frame_energy / window_gain

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import soundfile as sf

from mvdr_separation.errors import ValidationError
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)

# soundfile 子类型名
WAV_SUBTYPES = {"float32": "FLOAT", "pcm16": "PCM_16"}


@dataclass(frozen=True)
class Waveform:
    """单通道波形（有限实数，采样率 > 0）"""
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError(f"Waveform 需要一维样本，实际形状 {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("Waveform 含有 NaN/Inf")
        if int(self.sample_rate) <= 0:
            raise ValidationError(f"采样率必须为正数: {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_sec(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class MultichannelWaveform:
    """多通道波形：所有通道长度与采样率相同"""
    channels: Tuple[Waveform, ...]

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise ValidationError("MultichannelWaveform 至少需要一个通道")
        lengths = {len(c) for c in channels}
        rates = {c.sample_rate for c in channels}
        if len(lengths) != 1 or len(rates) != 1:
            raise ValidationError(f"通道长度/采样率不一致: lengths={sorted(lengths)}, rates={sorted(rates)}")
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_array(cls, data: np.ndarray, sample_rate: int) -> "MultichannelWaveform":
        """data: (M, L) 或 (L,)"""
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise ValidationError(f"多通道波形需要 (M, L) 数组，实际形状 {data.shape}")
        return cls(tuple(Waveform(row, sample_rate) for row in data))

    def as_array(self) -> np.ndarray:
        """返回 (M, L) 数组"""
        return np.stack([c.samples for c in self.channels], axis=0)

    @property
    def num_channels(self) -> int:
        return len(self.channels)

    @property
    def sample_rate(self) -> int:
        return self.channels[0].sample_rate

    def __len__(self) -> int:
        return len(self.channels[0])

    def channel(self, index: int) -> Waveform:
        if not 0 <= index < self.num_channels:
            raise ValidationError(f"通道索引 {index} 超出范围 [0, {self.num_channels})")
        return self.channels[index]


AnyWave = Union[Waveform, MultichannelWaveform]


def as_multichannel(wave: AnyWave) -> MultichannelWaveform:
    if isinstance(wave, MultichannelWaveform):
        return wave
    return MultichannelWaveform((wave,))


def read_wav(path: Union[str, Path]) -> MultichannelWaveform:
    """
    读取 WAV 文件（PCM16 / float32，单通道或多通道），样本归一化到 [-1, 1)

    Raises:
        ValidationError: 文件不存在或无法解析
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"WAV 文件不存在: {path}")
    try:
        data, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
    except RuntimeError as e:
        raise ValidationError(f"无法读取 WAV 文件 {path}: {e}") from e
    logger.debug("read_wav: %s, shape=%s, sr=%d", path, data.shape, sample_rate)
    return MultichannelWaveform.from_array(data.T, sample_rate)


def write_wav(path: Union[str, Path], wave: AnyWave, encoding: str = "float32") -> Path:
    """
    写入 WAV 文件

    Args:
        path: 输出路径（父目录会自动创建）
        wave: 单通道或多通道波形
        encoding: "float32" 或 "pcm16"
    """
    if encoding not in WAV_SUBTYPES:
        raise ValidationError(f"不支持的 WAV 编码 {encoding}，可选 {sorted(WAV_SUBTYPES)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    multi = as_multichannel(wave)
    data = multi.as_array().T
    if encoding == "pcm16":
        data = np.clip(data, -1.0, 1.0 - 1.0 / 32768.0)
    sf.write(str(path), data, multi.sample_rate, subtype=WAV_SUBTYPES[encoding], format="WAV")
    logger.debug("write_wav: %s, channels=%d, length=%d", path, multi.num_channels, len(multi))
    return path


def read_mono_sources(paths: Sequence[Union[str, Path]]) -> Tuple[Waveform, ...]:
    """
    读取一组单通道源文件（多通道文件只取第 0 通道）

    Raises:
        ValidationError: 列出所有无法读取的路径
    """
    waves = []
    failed = []
    for p in paths:
        try:
            waves.append(read_wav(p).channel(0))
        except ValidationError:
            failed.append(str(p))
    if failed:
        raise ValidationError(f"无法读取源文件: {failed}")
    return tuple(waves)

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

from mvdr_separation.dsp import MultichannelWaveform, StftConfig, Waveform, stft
from mvdr_separation.errors import ValidationError
from mvdr_separation.sim.room import RIR, split_rir
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class SimulatedExample:
    """
    一条仿真混合: y = Σ_i (early_i + late_i) + noise

    Attributes:
        example_id: 样本 id
        mixture: 观测 y (M 通道)
        dry_sources: 干声源 s_i
        early_images: 早期混响像 d_i (M 通道)
        late_images: 晚期混响 r_i (M 通道)
        noise: 噪声 n (M 通道)
        snr_db: 目标信噪比（inf 表示无噪声）
        early_boundary_ms: 早/晚期分界
        reference_channel: 参考通道 r
        metadata: 清单字段（T60、位置、重叠方式等）
    """
    example_id: str
    mixture: MultichannelWaveform
    dry_sources: Tuple[Waveform, ...]
    early_images: Tuple[MultichannelWaveform, ...]
    late_images: Tuple[MultichannelWaveform, ...]
    noise: MultichannelWaveform
    snr_db: float
    early_boundary_ms: float = 50.0
    reference_channel: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def num_speakers(self) -> int:
        return len(self.dry_sources)

    @property
    def num_channels(self) -> int:
        return self.mixture.num_channels

    @property
    def sample_rate(self) -> int:
        return self.mixture.sample_rate

    @property
    def length(self) -> int:
        return len(self.mixture)

    def early_reference(self, speaker: int, channel: Optional[int] = None) -> np.ndarray:
        """d_{i, r}"""
        r = self.reference_channel if channel is None else channel
        return self.early_images[speaker].channel(r).samples

    def image(self, speaker: int) -> np.ndarray:
        """x_i = d_i + r_i，(M, L)"""
        return self.early_images[speaker].as_array() + self.late_images[speaker].as_array()

    def recomposed(self) -> np.ndarray:
        total = np.zeros((self.num_channels, self.length))
        for i in range(self.num_speakers):
            total = total + self.early_images[i].as_array()
        for i in range(self.num_speakers):
            total = total + self.late_images[i].as_array()
        return total + self.noise.as_array()

    def decomposition_error(self) -> float:
        return float(np.max(np.abs(self.mixture.as_array() - self.recomposed())))

    def measured_snr_db(self) -> float:
        r = self.reference_channel
        clean = sum(float(np.sum(self.image(i)[r] ** 2)) for i in range(self.num_speakers))
        noise = float(np.sum(self.noise.channel(r).samples ** 2))
        if noise == 0:
            return float("inf")
        return 10.0 * np.log10(clean / noise)


def _convolve_channels(source: np.ndarray, taps: np.ndarray, length: int) -> np.ndarray:
    out = np.stack([sps.fftconvolve(source, h)[:length] for h in taps], axis=0)
    if out.shape[1] < length:
        out = np.pad(out, ((0, 0), (0, length - out.shape[1])))
    return out


def synthesize_mixture(
    sources: Sequence[Waveform],
    rirs: Sequence[RIR],
    snr_db: float,
    noise_seed: Optional[int] = None,
    boundary_ms: float = 50.0,
    reference_channel: int = 0,
    example_id: str = "example",
) -> SimulatedExample:
    """
    卷积声源并按参考通道 SNR 加入高斯白噪声

    Args:
        sources: 每个说话人的干声源（长度不同时末尾补零到最长）
        rirs: 每个说话人的 RIR
        snr_db: 10·log10(Σ_i ‖x_{i,r}‖² / ‖n_r‖²)，inf 表示不加噪声
        noise_seed: 噪声随机种子
        boundary_ms: 早/晚期分界
        reference_channel: 参考通道 r

    Raises:
        ValidationError: 数量/采样率/通道数不一致，或声源能量为 0
    """
    if not sources or len(sources) != len(rirs):
        raise ValidationError(f"声源数 {len(sources)} 与 RIR 数 {len(rirs)} 不一致")
    rates = {s.sample_rate for s in sources} | {h.sample_rate for h in rirs}
    if len(rates) != 1:
        raise ValidationError(f"采样率不一致: {sorted(rates)}")
    channels = {h.num_channels for h in rirs}
    if len(channels) != 1:
        raise ValidationError(f"RIR 通道数不一致: {sorted(channels)}")
    num_channels = channels.pop()
    if not 0 <= reference_channel < num_channels:
        raise ValidationError(f"参考通道 {reference_channel} 超出范围")
    for i, s in enumerate(sources):
        if not np.any(s.samples != 0):
            raise ValidationError(f"声源 {i} 能量为 0")
    sample_rate = rates.pop()
    length = max(len(s) for s in sources)

    dry, early, late = [], [], []
    for s, rir in zip(sources, rirs):
        samples = np.pad(s.samples, (0, length - len(s)))
        early_rir, late_rir = split_rir(rir, boundary_ms)
        dry.append(Waveform(samples, sample_rate))
        early.append(_convolve_channels(samples, early_rir.taps, length))
        late.append(_convolve_channels(samples, late_rir.taps, length))

    if np.isinf(snr_db) and snr_db > 0:
        noise = np.zeros((num_channels, length))
    else:
        rng = np.random.default_rng(noise_seed)
        noise = rng.standard_normal((num_channels, length))
        clean = sum(float(np.sum((e[reference_channel] + l[reference_channel]) ** 2)) for e, l in zip(early, late))
        noise_power = float(np.sum(noise[reference_channel] ** 2))
        noise *= np.sqrt(clean / (noise_power * 10.0 ** (snr_db / 10.0)))

    mixture = np.zeros((num_channels, length))
    for e in early:
        mixture = mixture + e
    for l in late:
        mixture = mixture + l
    mixture = mixture + noise

    example = SimulatedExample(
        example_id=example_id,
        mixture=MultichannelWaveform.from_array(mixture, sample_rate),
        dry_sources=tuple(dry),
        early_images=tuple(MultichannelWaveform.from_array(e, sample_rate) for e in early),
        late_images=tuple(MultichannelWaveform.from_array(l, sample_rate) for l in late),
        noise=MultichannelWaveform.from_array(noise, sample_rate),
        snr_db=float(snr_db),
        early_boundary_ms=float(boundary_ms),
        reference_channel=reference_channel,
    )
    logger.debug("synthesize_mixture: id=%s, I=%d, M=%d, L=%d", example_id, len(sources), num_channels, length)
    return example


def transfer_function_gap(
    dry: Waveform,
    rir: RIR,
    config: StftConfig,
    reference_channel: int = 0,
) -> float:
    """
    乘性传递函数近似的误差 ‖D - ṽ ⊙ D_r‖ / ‖D‖

    D 为混响像的 STFT，ṽ = A_m / A_r 由 RIR 的 frame_size 点频响得到。
    """
    length = len(dry)
    image = _convolve_channels(dry.samples, rir.taps, length)
    spec = stft(MultichannelWaveform.from_array(image, dry.sample_rate), config).data  # (T, F, M)
    # 长于一帧的 RIR 被截断到 frame_size
    response = np.fft.rfft(rir.taps, n=config.frame_size, axis=1)
    ref = response[reference_channel]
    with np.errstate(divide="ignore", invalid="ignore"):
        rtf = np.where(np.abs(ref) > 0, response / np.where(np.abs(ref) > 0, ref, 1.0), 0.0)  # (M, F)
    predicted = spec[:, :, reference_channel][:, :, None] * rtf.T[None, :, :]
    return float(np.linalg.norm(spec - predicted) / max(np.linalg.norm(spec), 1e-30))

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from mvdr_separation.autodiff import ComplexTensor, Tensor
from mvdr_separation.beamforming import (
    BeamformerWeights,
    CovarianceSet,
    MaskSet,
    RTFVector,
    apply_beamformer,
    estimate_covariances,
    mvdr_weights,
    rtf_eigh,
    rtf_power_iteration,
)
from mvdr_separation.dsp import (
    MultichannelWaveform,
    Spectrogram,
    StftConfig,
    Waveform,
    apply_mask,
    as_multichannel,
    istft_tensor,
    stft,
)
from mvdr_separation.enums import Enhancement, MaskKind, RtfMode
from mvdr_separation.errors import ValidationError
from mvdr_separation.losses import LossConfig, create_pair_loss, pit_wrap, split_speakers
from mvdr_separation.model import Parameters, estimate_masks
from mvdr_separation.sim import SimulatedExample
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class SeparationOutput:
    """
    一次分离的中间量与结果

    Attributes:
        spec: 观测谱 (T, F, M)
        masks: 掩蔽
        estimate_spec: 估计谱 (T, F, I)
        estimate: 时域估计 (I, L)
        covariances: MVDR 模式下的协方差
        rtf: MVDR 模式下的 RTF
        weights: MVDR 模式下的波束形成系数
    """
    spec: Spectrogram
    masks: MaskSet
    estimate_spec: ComplexTensor
    estimate: Tensor
    covariances: Optional[CovarianceSet] = None
    rtf: Optional[RTFVector] = None
    weights: Optional[BeamformerWeights] = None

    def estimate_waveforms(self) -> List[Waveform]:
        data = self.estimate.numpy()
        return [Waveform(data[i], self.spec.sample_rate) for i in range(data.shape[0])]


class SeparationPipeline:
    """
    分离流水线：最外层封装，组合所有处理阶段
    - 分析 (STFT)
    - 掩蔽估计 (Parameters + network)
    - 源提取 (协方差 -> RTF -> MVDR，或参考通道掩蔽)
    - 合成 (iSTFT) 与 PIT 训练损失
    """

    def __init__(
        self,
        params: Parameters,
        stft_config: StftConfig,
        loss_config: Optional[LossConfig] = None,
        reference_channel: int = 0,
        epsilon: float = 0.01,
        tie_distortion_covariances: bool = False,
        eta_max: int = 3,
        enhancement: Union[Enhancement, str] = Enhancement.MVDR,
    ):
        """
        Args:
            params: 掩蔽估计网络参数
            stft_config: STFT 配置（频点数须与网络一致）
            loss_config: 训练损失配置
            reference_channel: 参考通道 r
            epsilon: 协方差掩蔽下限 ε
            tie_distortion_covariances: R_ñ 与 R_n 都用 m_n 估计
            eta_max: 幂迭代次数
            enhancement: 默认的提取方式
        """
        if params.config.num_bins != stft_config.num_bins:
            raise ValidationError(
                f"网络频点数 {params.config.num_bins} 与 STFT 频点数 {stft_config.num_bins} 不一致"
            )
        self.params = params
        self.stft_config = stft_config
        self.loss_config = loss_config or LossConfig()
        self.reference_channel = reference_channel
        self.epsilon = epsilon
        self.tie_distortion_covariances = tie_distortion_covariances
        self.eta_max = eta_max
        self.enhancement = Enhancement(enhancement)

    @classmethod
    def from_config(cls, config, params: Parameters) -> "SeparationPipeline":
        """由 TrainConfig 构造"""
        return cls(
            params,
            config.stft,
            loss_config=config.loss,
            reference_channel=config.reference_channel,
            epsilon=config.epsilon,
            tie_distortion_covariances=config.tie_distortion_covariances,
            eta_max=config.eta_max,
            enhancement=config.enhancement,
        )

    @property
    def num_speakers(self) -> int:
        return self.params.config.num_speakers

    # -----------------------------
    # 处理阶段
    # -----------------------------
    def analyze(self, wave) -> Spectrogram:
        wave = as_multichannel(wave)
        if not 0 <= self.reference_channel < wave.num_channels:
            raise ValidationError(f"参考通道 {self.reference_channel} 超出输入通道数 {wave.num_channels}")
        return stft(wave, self.stft_config)

    def masks(self, spec: Spectrogram) -> MaskSet:
        return estimate_masks(self.params, spec, self.reference_channel)

    def beamform(
        self,
        spec: Spectrogram,
        masks: MaskSet,
        rtf_mode: Union[RtfMode, str] = RtfMode.POWER_ITERATION,
        eta_max: Optional[int] = None,
    ) -> Tuple[ComplexTensor, CovarianceSet, RTFVector, BeamformerWeights]:
        """
        协方差 -> RTF -> MVDR -> 波束形成

        Returns:
            (估计谱 (T, F, I), 协方差, RTF, 系数)
        """
        covariances = estimate_covariances(spec, masks, self.epsilon, self.tie_distortion_covariances)
        r_target = covariances.get(MaskKind.TARGET)
        r_rtf_noise = covariances.get(MaskKind.DISTORTION_RTF)
        if RtfMode(rtf_mode) is RtfMode.EIGH:
            rtf = rtf_eigh(r_target, r_rtf_noise, self.reference_channel)
        else:
            rtf = rtf_power_iteration(
                r_target, r_rtf_noise, self.reference_channel, eta_max or self.eta_max
            )
        weights = mvdr_weights(covariances.get(MaskKind.DISTORTION), rtf)
        return apply_beamformer(weights, spec), covariances, rtf, weights

    def extract(
        self,
        spec: Spectrogram,
        masks: MaskSet,
        enhancement: Optional[Union[Enhancement, str]] = None,
        rtf_mode: Union[RtfMode, str] = RtfMode.POWER_ITERATION,
        eta_max: Optional[int] = None,
        total_length: Optional[int] = None,
    ) -> SeparationOutput:
        """按提取方式得到估计谱与时域估计"""
        enhancement = self.enhancement if enhancement is None else Enhancement(enhancement)
        length = spec.original_length if total_length is None else total_length
        if enhancement is Enhancement.MASKING:
            estimate_spec = apply_mask(masks.get(MaskKind.TARGET), spec, self.reference_channel)
            estimate = istft_tensor(estimate_spec, self.stft_config, length)
            return SeparationOutput(spec, masks, estimate_spec, estimate)
        estimate_spec, covariances, rtf, weights = self.beamform(spec, masks, rtf_mode, eta_max)
        estimate = istft_tensor(estimate_spec, self.stft_config, length)
        return SeparationOutput(spec, masks, estimate_spec, estimate, covariances, rtf, weights)

    def separate(
        self,
        wave,
        enhancement: Optional[Union[Enhancement, str]] = None,
        rtf_mode: Union[RtfMode, str] = RtfMode.POWER_ITERATION,
        eta_max: Optional[int] = None,
    ) -> SeparationOutput:
        """完整前向：波形 -> 每个说话人的估计"""
        spec = self.analyze(wave)
        return self.extract(spec, self.masks(spec), enhancement, rtf_mode, eta_max)

    # -----------------------------
    # 训练损失
    # -----------------------------
    def loss_targets(self, example: SimulatedExample) -> List:
        """
        训练参考信号

        - CI-SDR: 干声源 s_i
        - SDR / SI-SDR: 参考通道早期像 d_{i,r}
        - F-SDR: d_{i,r} 的 STFT
        """
        kind = self.loss_config.kind
        if kind.uses_dry_source:
            return [s.samples for s in example.dry_sources]
        early = [example.early_reference(i, self.reference_channel) for i in range(example.num_speakers)]
        if kind.stft_domain:
            return [stft(Waveform(d, example.sample_rate), self.stft_config).data[:, :, 0] for d in early]
        return early

    def training_loss(
        self,
        example: SimulatedExample,
        enhancement: Optional[Union[Enhancement, str]] = None,
    ) -> Tuple[Tensor, Tuple[int, ...], SeparationOutput]:
        """
        一个样本的 PIT 损失（幂迭代 RTF，整条路径可微）

        Returns:
            (loss, perm, output)
        """
        if example.num_speakers != self.num_speakers:
            raise ValidationError(f"样本说话人数 {example.num_speakers} 与网络 {self.num_speakers} 不一致")
        output = self.separate(example.mixture, enhancement, RtfMode.POWER_ITERATION)
        pair_loss = create_pair_loss(self.loss_config, example.sample_rate)
        if self.loss_config.kind.stft_domain:
            estimates = split_speakers(output.estimate_spec)
        else:
            estimates = split_speakers(output.estimate)
        loss, perm = pit_wrap(pair_loss, self.loss_targets(example), estimates)
        return loss, perm, output

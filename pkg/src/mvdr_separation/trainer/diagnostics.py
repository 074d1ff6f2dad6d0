from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from mvdr_separation.autodiff import Tensor, einsum, grad_check, sigmoid
from mvdr_separation.beamforming import MaskSet, apply_beamformer, estimate_covariances, mvdr_weights, rtf_power_iteration
from mvdr_separation.dsp import MultichannelWaveform, Spectrogram, StftConfig, istft_tensor, stft
from mvdr_separation.enums import LossKind, MaskKind
from mvdr_separation.losses import LossConfig, create_pair_loss, pit_wrap, split_speakers
from mvdr_separation.utils.logger import get_logger, log_record

logger = get_logger(__name__)

# 验收阈值（64 位浮点）
GRAD_CHECK_TOLERANCE = 1e-4


@dataclass
class ToyProblem:
    """
    组合梯度检查用的小规模问题: M=3, T=12, F=9, I=2

    掩蔽 logits 由固定随机特征 Z (T, F, K) 与可训练投影 P (K, 3, I) 得到，
    每个 P 元素影响所有时频点。
    """
    spec: Spectrogram
    features: np.ndarray
    sources: List[np.ndarray]
    projection: np.ndarray
    length: int
    sample_rate: int
    taps: int
    eta_max: int = 3


def make_toy_problem(seed: int = 0, channels: int = 3, speakers: int = 2, rank: int = 4) -> ToyProblem:
    rng = np.random.default_rng(seed)
    config = StftConfig(frame_size=16, shift=4)
    length, sample_rate = 48, 8000
    mixture = rng.standard_normal((channels, length))
    spec = stft(MultichannelWaveform.from_array(mixture, sample_rate), config)
    features = rng.standard_normal((spec.num_frames, spec.num_bins, rank))
    projection = 0.5 * rng.standard_normal((rank, len(MaskKind), speakers))
    sources = [rng.standard_normal(length) for _ in range(speakers)]
    return ToyProblem(spec, features, sources, projection, length, sample_rate, taps=8)


def composite_loss(problem: ToyProblem, kind: LossKind, projection: Tensor) -> Tensor:
    """P -> 掩蔽 -> 协方差 -> 幂迭代 RTF -> MVDR -> 波束形成 -> iSTFT -> PIT 损失"""
    logits = einsum("tfk,kvi->vtfi", problem.features, projection)
    masks = MaskSet(sigmoid(logits))
    covariances = estimate_covariances(problem.spec, masks)
    rtf = rtf_power_iteration(
        covariances.get(MaskKind.TARGET), covariances.get(MaskKind.DISTORTION_RTF), 0, problem.eta_max
    )
    weights = mvdr_weights(covariances.get(MaskKind.DISTORTION), rtf)
    estimate_spec = apply_beamformer(weights, problem.spec)

    pair_loss = create_pair_loss(LossConfig(kind=kind, ci_filter_taps=problem.taps), problem.sample_rate)
    if kind.stft_domain:
        targets = [
            stft(MultichannelWaveform.from_array(s[None, :], problem.sample_rate), problem.spec.config).data[:, :, 0]
            for s in problem.sources
        ]
        estimates = split_speakers(estimate_spec)
    else:
        targets = problem.sources
        estimates = split_speakers(istft_tensor(estimate_spec, problem.spec.config, problem.length))
    loss, _ = pit_wrap(pair_loss, targets, estimates)
    return loss


def composite_grad_check(
    kinds: Optional[Sequence[LossKind]] = None,
    seed: int = 0,
    eps: float = 1e-6,
) -> Dict[str, float]:
    """
    对每种损失做端到端梯度检查

    Returns:
        {loss kind: 最大相对误差}
    """
    problem = make_toy_problem(seed)
    kinds = list(LossKind) if kinds is None else [LossKind(k) for k in kinds]
    results: Dict[str, float] = {}
    for kind in kinds:
        error = grad_check(lambda leaves: composite_loss(problem, kind, leaves[0]), [problem.projection], eps)
        results[kind.value] = error
        log_record(logger, "grad_check.composite", loss=kind.value, max_relative_error=error,
                   passed=error < GRAD_CHECK_TOLERANCE)
    return results

from __future__ import annotations

from functools import partial
from typing import Sequence, Tuple

from mvdr_separation.autodiff import Tensor
from mvdr_separation.enums import LossKind
from mvdr_separation.losses.ci_sdr import ci_sdr_pair
from mvdr_separation.losses.config import LossConfig
from mvdr_separation.losses.pit import PairLoss, pit_wrap
from mvdr_separation.losses.sdr import f_sdr_pair, sdr_pair, si_sdr_pair


def create_pair_loss(config: LossConfig, sample_rate: int) -> PairLoss:
    """统一入口：根据 LossConfig.kind 返回单对损失函数 (target, estimate) -> Tensor"""
    kind = config.kind
    if kind is LossKind.CI_SDR:
        return partial(
            ci_sdr_pair,
            taps=config.taps_for(sample_rate),
            solver=config.ci_solver,
            log_floor=config.log_floor,
        )
    if kind is LossKind.SI_SDR:
        return partial(si_sdr_pair, log_floor=config.log_floor)
    if kind is LossKind.SDR:
        return partial(sdr_pair, log_floor=config.log_floor)
    if kind is LossKind.F_SDR:
        return partial(f_sdr_pair, log_floor=config.log_floor)
    raise ValueError(f"不支持的损失类型 {kind}")


def pit_loss(
    config: LossConfig,
    sample_rate: int,
    targets: Sequence,
    estimates: Sequence,
) -> Tuple[Tensor, Tuple[int, ...]]:
    return pit_wrap(create_pair_loss(config, sample_rate), targets, estimates)

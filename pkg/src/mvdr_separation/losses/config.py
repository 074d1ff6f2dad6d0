from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Optional

from mvdr_separation.enums import LossKind, WienerSolver
from mvdr_separation.errors import ValidationError

# 目标滤波器时长：32 ms (16 kHz 下为 512 个系数)
CI_FILTER_DURATION_SEC = 0.032


@dataclass
class LossConfig:
    """
    训练目标配置

    ci_filter_taps 为 None 时按 32 ms 规则随采样率换算。
    """
    kind: LossKind = LossKind.CI_SDR
    ci_filter_taps: Optional[int] = 512
    log_floor: float = 1e-10
    ci_solver: WienerSolver = WienerSolver.DIRECT_NORMAL_EQUATIONS

    def __post_init__(self):
        try:
            self.kind = LossKind(self.kind)
            self.ci_solver = WienerSolver(self.ci_solver)
        except ValueError as e:
            raise ValidationError(f"LossConfig: {e}") from e
        if self.ci_filter_taps is not None and int(self.ci_filter_taps) < 1:
            raise ValidationError(f"ci_filter_taps 必须 >= 1: {self.ci_filter_taps}")
        if not self.log_floor > 0:
            raise ValidationError(f"log_floor 必须 > 0: {self.log_floor}")

    def taps_for(self, sample_rate: int) -> int:
        if self.ci_filter_taps is not None:
            return int(self.ci_filter_taps)
        return taps_for_duration(sample_rate)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "ci_filter_taps": self.ci_filter_taps,
            "log_floor": self.log_floor,
            "ci_solver": self.ci_solver.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossConfig":
        return cls(**data)


def taps_for_duration(sample_rate: int, duration_sec: float = CI_FILTER_DURATION_SEC) -> int:
    return max(1, int(round(duration_sec * sample_rate)))

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict

from mvdr_separation.enums import MaskKind
from mvdr_separation.errors import ValidationError


@dataclass
class NetConfig:
    """掩蔽估计网络配置（默认为桌面规模: 1 层双向 GRU x 64 单元）"""
    num_speakers: int = 2
    num_bins: int = 129
    recurrent_layers: int = 1
    hidden_units: int = 64
    bidirectional: bool = True
    projection_layers: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("num_speakers", "num_bins", "recurrent_layers", "hidden_units"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"NetConfig.{name} 必须 >= 1: {getattr(self, name)}")
        if self.projection_layers != 2:
            raise ValidationError(f"projection_layers 固定为 2: {self.projection_layers}")

    @property
    def recurrent_width(self) -> int:
        return self.hidden_units * (2 if self.bidirectional else 1)

    @property
    def output_width(self) -> int:
        return self.num_bins * len(MaskKind) * self.num_speakers

    @property
    def directions(self) -> tuple:
        return ("fw", "bw") if self.bidirectional else ("fw",)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetConfig":
        return cls(**data)

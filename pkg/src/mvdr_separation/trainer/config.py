from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from mvdr_separation.dsp import StftConfig
from mvdr_separation.enums import Enhancement, LossKind, RtfMode
from mvdr_separation.errors import ValidationError
from mvdr_separation.losses import LossConfig
from mvdr_separation.model import NetConfig
from mvdr_separation.sim import DatasetConfig


@dataclass
class OptimizerConfig:
    """Adam 配置"""
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind != "adam":
            raise ValidationError(f"只支持 adam 优化器: {self.kind}")
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate 必须 > 0: {self.learning_rate}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OptimizerConfig":
        return cls(**data)


@dataclass
class TrainConfig:
    """
    训练/推理的完整配置

    stft、net、dataset 之间的尺寸必须一致（频点数、说话人数、参考通道）。
    """
    net: NetConfig = field(default_factory=NetConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    grad_clip_norm: float = 5.0
    steps: int = 2000
    eval_every: int = 200
    eta_max: int = 3
    seed: int = 0
    enhancement: Enhancement = Enhancement.MVDR
    reference_channel: int = 0
    epsilon: float = 0.01
    tie_distortion_covariances: bool = False
    eval_examples: int = 20
    output_dir: str = "runs/desk"

    def __post_init__(self):
        self.enhancement = Enhancement(self.enhancement)
        if self.net.num_bins != self.stft.num_bins:
            raise ValidationError(f"net.num_bins={self.net.num_bins} 与 STFT 频点数 {self.stft.num_bins} 不一致")
        if self.net.num_speakers != self.dataset.num_speakers:
            raise ValidationError(
                f"net.num_speakers={self.net.num_speakers} 与 dataset.num_speakers={self.dataset.num_speakers} 不一致"
            )
        if self.reference_channel != self.dataset.reference_channel:
            raise ValidationError("reference_channel 必须与 dataset.reference_channel 一致")
        if self.steps < 0 or self.eval_every < 1 or self.eta_max < 1:
            raise ValidationError("steps >= 0, eval_every >= 1, eta_max >= 1")
        if self.epsilon < 0 or not self.grad_clip_norm > 0:
            raise ValidationError("epsilon >= 0 且 grad_clip_norm > 0")

    @property
    def sample_rate(self) -> int:
        return self.dataset.sample_rate

    @property
    def num_channels(self) -> int:
        return self.dataset.num_channels

    def to_dict(self) -> Dict[str, Any]:
        return {
            "net": self.net.to_dict(),
            "stft": self.stft.to_dict(),
            "loss": self.loss.to_dict(),
            "dataset": self.dataset.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "grad_clip_norm": self.grad_clip_norm,
            "steps": self.steps,
            "eval_every": self.eval_every,
            "eta_max": self.eta_max,
            "seed": self.seed,
            "enhancement": self.enhancement.value,
            "reference_channel": self.reference_channel,
            "epsilon": self.epsilon,
            "tie_distortion_covariances": self.tie_distortion_covariances,
            "eval_examples": self.eval_examples,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        data = dict(data)
        nested = {
            "net": NetConfig,
            "stft": StftConfig,
            "loss": LossConfig,
            "dataset": DatasetConfig,
            "optimizer": OptimizerConfig,
        }
        try:
            for key, kind in nested.items():
                if key in data:
                    data[key] = kind.from_dict(data[key])
            return cls(**data)
        except TypeError as e:
            raise ValidationError(f"配置字段错误: {e}") from e

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
        return path


def load_config(path: Optional[Union[str, Path]] = None) -> TrainConfig:
    """读取 JSON 配置；path 为 None 时返回默认（桌面规模）配置"""
    if path is None:
        return TrainConfig()
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"配置文件不存在: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"配置文件不是合法 JSON: {path} ({e})") from e
    return TrainConfig.from_dict(data)


def parse_rtf(value: str) -> Tuple[RtfMode, Optional[int]]:
    """
    解析 --rtf: "eigh" 或 "power:<n>"

    Returns:
        (mode, eta_max)，eigh 时 eta_max 为 None
    """
    value = value.strip().lower()
    if value == "eigh":
        return RtfMode.EIGH, None
    if value.startswith("power:"):
        try:
            count = int(value.split(":", 1)[1])
        except ValueError:
            count = 0
        if count >= 1:
            return RtfMode.POWER_ITERATION, count
    raise ValidationError(f"--rtf 取值应为 eigh 或 power:<n> (n >= 1): {value}")


def apply_overrides(
    config: TrainConfig,
    steps: Optional[int] = None,
    loss: Optional[str] = None,
    rtf: Optional[str] = None,
    seed: Optional[int] = None,
    enhancement: Optional[str] = None,
) -> TrainConfig:
    """
    命令行覆盖配置文件的值，返回新的 TrainConfig

    训练时 --rtf 只接受 power:<n>（特征分解不可微），n 写入 eta_max。
    """
    data = config.to_dict()
    if steps is not None:
        data["steps"] = int(steps)
    if loss is not None:
        try:
            data["loss"]["kind"] = LossKind(loss).value
        except ValueError as e:
            raise ValidationError(f"--loss 不支持: {loss}") from e
    if rtf is not None:
        mode, count = parse_rtf(rtf)
        if mode is not RtfMode.POWER_ITERATION:
            raise ValidationError("训练只能使用幂迭代 RTF (--rtf power:<n>)")
        data["eta_max"] = count
    if seed is not None:
        data["seed"] = int(seed)
        data["net"]["seed"] = int(seed)
    if enhancement is not None:
        try:
            data["enhancement"] = Enhancement(enhancement).value
        except ValueError as e:
            raise ValidationError(f"--enhancement 不支持: {enhancement}") from e
    return TrainConfig.from_dict(data)

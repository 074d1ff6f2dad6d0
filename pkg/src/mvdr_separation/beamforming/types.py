from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mvdr_separation.autodiff import ComplexTensor, Tensor, as_tensor
from mvdr_separation.enums import MaskKind
from mvdr_separation.errors import ShapeError, ValidationError


@dataclass
class MaskSet:
    """
    每个说话人三种掩蔽: 目标 d / MVDR 干扰 n / RTF 干扰 ñ

    Attributes:
        masks: (3, T, F, I) 实数 Tensor，取值 [0, 1]
    """
    masks: Tensor

    def __post_init__(self):
        self.masks = as_tensor(self.masks)
        if self.masks.ndim != 4 or self.masks.shape[0] != len(MaskKind):
            raise ShapeError("MaskSet", [self.masks.shape], "需要 (3, T, F, I)")
        data = self.masks.data
        if not np.all(np.isfinite(data)) or data.min(initial=0.0) < 0.0 or data.max(initial=0.0) > 1.0:
            raise ValidationError("MaskSet: 掩蔽值必须在 [0, 1] 内")

    @classmethod
    def from_numpy(cls, masks: np.ndarray, requires_grad: bool = False) -> "MaskSet":
        return cls(Tensor(masks, requires_grad=requires_grad, name="masks"))

    def get(self, kind: MaskKind) -> Tensor:
        """(T, F, I)"""
        return self.masks[kind.index]

    @property
    def num_frames(self) -> int:
        return self.masks.shape[1]

    @property
    def num_bins(self) -> int:
        return self.masks.shape[2]

    @property
    def num_speakers(self) -> int:
        return self.masks.shape[3]


@dataclass
class CovarianceSet:
    """
    掩蔽加权空间协方差

    Attributes:
        matrices: (3, F, I, M, M) 复数张量，按 MaskKind 索引
        epsilon: 掩蔽下限 ε
    """
    matrices: ComplexTensor
    epsilon: float

    def __post_init__(self):
        shape = self.matrices.shape
        if len(shape) != 5 or shape[0] != len(MaskKind) or shape[-1] != shape[-2]:
            raise ShapeError("CovarianceSet", [shape], "需要 (3, F, I, M, M)")

    def get(self, kind: MaskKind) -> ComplexTensor:
        """(F, I, M, M)"""
        return self.matrices[kind.index]

    def numpy(self, kind: MaskKind) -> np.ndarray:
        return self.get(kind).numpy()

    @property
    def num_channels(self) -> int:
        return self.matrices.shape[-1]


@dataclass
class RTFVector:
    """
    相对传递函数 ṽ = v / v_r

    Attributes:
        values: (F, I, M) 复数张量，第 r 个分量恒为 1
        reference_channel: 参考通道 r
    """
    values: ComplexTensor
    reference_channel: int

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError("RTFVector", [self.values.shape], "需要 (F, I, M)")
        if not 0 <= self.reference_channel < self.values.shape[-1]:
            raise ValidationError(f"参考通道 {self.reference_channel} 超出范围")

    def numpy(self) -> np.ndarray:
        return self.values.numpy()


@dataclass
class BeamformerWeights:
    """
    波束形成系数 w

    Attributes:
        values: (F, I, M) 复数张量
        reference_channel: 参考通道 r
    """
    values: ComplexTensor
    reference_channel: int

    def numpy(self) -> np.ndarray:
        return self.values.numpy()

    def distortion_error(self, rtf: RTFVector) -> np.ndarray:
        """|wᴴṽ - 1|，形状 (F, I)"""
        response = np.sum(np.conj(self.numpy()) * rtf.numpy(), axis=-1)
        return np.abs(response - 1.0)

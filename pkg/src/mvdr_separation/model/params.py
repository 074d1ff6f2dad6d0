"""
网络参数与检查点

检查点是一个 .npz 文件：
  - 每个参数一个数组，键为参数名（如 "gru0.fw.w_ih"），形状即参数形状
  - "__format__": 格式版本字符串
  - "__config__": NetConfig 的 JSON
  - "__meta__": 训练附加信息的 JSON（STFT 配置、参考通道、步数等）
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from mvdr_separation.autodiff import Tensor
from mvdr_separation.errors import ValidationError
from mvdr_separation.model.config import NetConfig
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "mvdr-separation-checkpoint/1"
_RESERVED = ("__format__", "__config__", "__meta__")


class Parameters:
    """有序的命名参数集合（均为可训练叶子 Tensor）"""

    def __init__(self, tensors: "OrderedDict[str, Tensor]", config: NetConfig):
        self._tensors = OrderedDict(tensors)
        self.config = config

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def tensors(self) -> List[Tensor]:
        return list(self._tensors.values())

    @property
    def num_values(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], config: NetConfig) -> "Parameters":
        tensors = OrderedDict(
            (name, Tensor(value, requires_grad=True, name=name)) for name, value in arrays.items()
        )
        return cls(tensors, config)


def parameter_shapes(config: NetConfig) -> "OrderedDict[str, Tuple[Tuple[int, ...], int]]":
    """参数名 -> (形状, fan_in)"""
    shapes: "OrderedDict[str, Tuple[Tuple[int, ...], int]]" = OrderedDict()
    hidden = config.hidden_units
    in_dim = config.num_bins
    for layer in range(config.recurrent_layers):
        for direction in config.directions:
            prefix = f"gru{layer}.{direction}"
            shapes[f"{prefix}.w_ih"] = ((in_dim, 3 * hidden), in_dim)
            shapes[f"{prefix}.w_hh"] = ((hidden, 3 * hidden), hidden)
            shapes[f"{prefix}.b_ih"] = ((3 * hidden,), in_dim)
            shapes[f"{prefix}.b_hh"] = ((3 * hidden,), hidden)
        in_dim = config.recurrent_width
    width = config.recurrent_width
    shapes["proj1.w"] = ((width, width), width)
    shapes["proj1.b"] = ((width,), width)
    shapes["proj2.w"] = ((width, config.output_width), width)
    shapes["proj2.b"] = ((config.output_width,), width)
    return shapes


def init_params(config: NetConfig) -> Parameters:
    """均匀初始化 U(-1/sqrt(fan_in), 1/sqrt(fan_in))，由 config.seed 决定"""
    rng = np.random.default_rng(config.seed)
    arrays = OrderedDict()
    for name, (shape, fan_in) in parameter_shapes(config).items():
        bound = 1.0 / np.sqrt(fan_in)
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    params = Parameters.from_arrays(arrays, config)
    logger.debug("init_params: %d tensors, %d values, seed=%d", len(params), params.num_values, config.seed)
    return params


def save_checkpoint(
    path: Union[str, Path],
    params: Parameters,
    meta: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = params.to_arrays()
    payload["__format__"] = np.array(CHECKPOINT_FORMAT)
    payload["__config__"] = np.array(json.dumps(params.config.to_dict(), sort_keys=True))
    payload["__meta__"] = np.array(json.dumps(meta or {}, sort_keys=True))
    np.savez(path, **payload)
    logger.info("检查点已保存: %s (%d 个参数张量)", path, len(params))
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Parameters, Dict[str, Any]]:
    """
    读取检查点

    Returns:
        (params, meta)

    Raises:
        ValidationError: 文件不存在、格式不符或参数形状与配置不一致
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"检查点不存在: {path}")
    with np.load(path, allow_pickle=False) as archive:
        if "__format__" not in archive.files or str(archive["__format__"]) != CHECKPOINT_FORMAT:
            raise ValidationError(f"不是有效的检查点文件: {path}")
        config = NetConfig.from_dict(json.loads(str(archive["__config__"])))
        meta = json.loads(str(archive["__meta__"]))
        arrays = OrderedDict()
        for name, (shape, _) in parameter_shapes(config).items():
            if name not in archive.files or archive[name].shape != shape:
                raise ValidationError(f"检查点参数 {name} 缺失或形状不符 (期望 {shape})")
            arrays[name] = archive[name].astype(np.float64)
    return Parameters.from_arrays(arrays, config), meta

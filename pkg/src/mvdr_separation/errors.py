from __future__ import annotations

from typing import Sequence, Tuple


class SeparationError(Exception):
    """本项目所有异常的基类"""


class ValidationError(SeparationError, ValueError):
    """输入/配置不合法 (CLI 退出码 2)"""

    exit_code = 2


class ShapeError(ValidationError):
    """形状不匹配：记录算子名称与参与运算的形状"""

    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        msg = f"{op}: 形状不兼容 {self.shapes}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class NumericalError(SeparationError, RuntimeError):
    """数值计算失败 (CLI 退出码 3)"""

    exit_code = 3


class NonFiniteError(NumericalError):
    """计算图中出现 NaN/Inf，node 为第一个出问题的节点名称"""

    def __init__(self, node: str, detail: str = ""):
        self.node = node
        msg = f"非有限值 (NaN/Inf) 出现在节点 {node}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class EigenSolverError(NumericalError):
    """特征分解未收敛"""

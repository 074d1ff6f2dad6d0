from __future__ import annotations

import threading
from collections import Counter
from typing import Dict

import numpy as np

from mvdr_separation.autodiff import ComplexTensor, Tensor
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)

# 条件数上限，超过即视为奇异
CONDITION_LIMIT = 1e12
# 对角加载: max(LOADING_SCALE * trace / M, LOADING_FLOOR)
LOADING_SCALE = 1e-10
LOADING_FLOOR = 1e-12


class NumericsCounter:
    """线程安全的数值回退计数器"""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: Counter = Counter()

    def record(self, event: str, count: int = 1, **context) -> None:
        if count <= 0:
            return
        with self._lock:
            self._counts[event] += count
        logger.warning("数值回退 %s: %d 个频点 %s", event, count, context or "")

    def get(self, event: str) -> int:
        with self._lock:
            return self._counts[event]

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            return dict(self._counts)

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()


NUMERICS = NumericsCounter()


def condition_numbers(matrices: np.ndarray) -> np.ndarray:
    """批量 2-范数条件数，最小奇异值为 0 时返回 inf"""
    s = np.linalg.svd(matrices, compute_uv=False)
    largest, smallest = s[..., 0], s[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(smallest > 0, largest / np.where(smallest > 0, smallest, 1.0), np.inf)
    return cond


def loading_amounts(matrices: np.ndarray) -> np.ndarray:
    """每个矩阵的对角加载量 max(1e-10 * trace / M, 1e-12)"""
    m = matrices.shape[-1]
    trace = np.abs(np.trace(matrices, axis1=-2, axis2=-1).real)
    return np.maximum(LOADING_SCALE * trace / m, LOADING_FLOOR)


def add_diagonal(matrices: ComplexTensor, amounts: np.ndarray) -> ComplexTensor:
    """R + diag(amount)，amount 为常量 (...,)"""
    m = matrices.shape[-1]
    eye = np.eye(m)
    return ComplexTensor(matrices.re + Tensor(amounts[..., None, None] * eye), matrices.im)


def load_if_singular(matrices: ComplexTensor, where: str) -> ComplexTensor:
    """
    条件数超过 CONDITION_LIMIT 的矩阵加对角加载，并记录回退次数

    Args:
        matrices: (..., M, M)
        where: 调用方名称，用于计数与日志
    """
    values = matrices.numpy()
    singular = condition_numbers(values) > CONDITION_LIMIT
    count = int(np.count_nonzero(singular))
    if count == 0:
        return matrices
    NUMERICS.record(f"{where}.diagonal_loading", count)
    amounts = np.where(singular, loading_amounts(values), 0.0)
    return add_diagonal(matrices, amounts)


def load_if_singular_numpy(matrices: np.ndarray, where: str) -> np.ndarray:
    singular = condition_numbers(matrices) > CONDITION_LIMIT
    count = int(np.count_nonzero(singular))
    if count == 0:
        return matrices
    NUMERICS.record(f"{where}.diagonal_loading", count)
    amounts = np.where(singular, loading_amounts(matrices), 0.0)
    return matrices + amounts[..., None, None] * np.eye(matrices.shape[-1])

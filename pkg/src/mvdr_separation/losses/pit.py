from __future__ import annotations

from itertools import permutations
from typing import Callable, List, Sequence, Tuple

import numpy as np

from mvdr_separation.autodiff import Tensor, stack
from mvdr_separation.errors import ValidationError

# 阶乘搜索的说话人数上限
MAX_SPEAKERS = 6

PairLoss = Callable[..., Tensor]


def loss_matrix(pair_loss: PairLoss, targets: Sequence, estimates: Sequence) -> List[List[Tensor]]:
    """L[i][j] = pair_loss(targets[i], estimates[j])"""
    return [[pair_loss(t, e) for e in estimates] for t in targets]


def best_permutation(matrix: np.ndarray) -> Tuple[Tuple[int, ...], float]:
    """
    穷举所有分配，返回平均损失最小的排列（并列时取字典序最小）

    Args:
        matrix: (I, I) 损失值，matrix[i, j] 为目标 i 配估计 j

    Returns:
        (perm, value)，perm[i] 为分配给目标 i 的估计下标
    """
    count = matrix.shape[0]
    best, best_value = None, np.inf
    for perm in permutations(range(count)):
        value = float(np.mean([matrix[i, j] for i, j in enumerate(perm)]))
        if value < best_value:
            best, best_value = perm, value
    return best, best_value


def pit_wrap(pair_loss: PairLoss, targets: Sequence, estimates: Sequence) -> Tuple[Tensor, Tuple[int, ...]]:
    """
    置换不变损失

    对 I! 种分配求平均损失的最小值；梯度只经过最小分配对应的 I 项。

    Returns:
        (loss, perm)
    """
    targets, estimates = list(targets), list(estimates)
    if len(targets) != len(estimates):
        raise ValidationError(f"pit_wrap: 目标数 {len(targets)} 与估计数 {len(estimates)} 不一致")
    if not 1 <= len(targets) <= MAX_SPEAKERS:
        raise ValidationError(f"pit_wrap: 说话人数必须在 [1, {MAX_SPEAKERS}]: {len(targets)}")

    matrix = loss_matrix(pair_loss, targets, estimates)
    values = np.array([[entry.item() for entry in row] for row in matrix])
    perm, _ = best_permutation(values)
    chosen = [matrix[i][j] for i, j in enumerate(perm)]
    return stack(chosen).mean(), tuple(perm)

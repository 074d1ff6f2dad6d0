from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np

from mvdr_separation.autodiff.tensor import Tensor, gradients, no_grad
from mvdr_separation.errors import ShapeError, ValidationError
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)


def _evaluate(fn: Callable[[List[Tensor]], Tensor], arrays: Sequence[np.ndarray]) -> float:
    value = fn([Tensor(a) for a in arrays])
    if not isinstance(value, Tensor) or value.size != 1:
        raise ShapeError("grad_check", [getattr(value, "shape", ())], "函数必须返回标量 Tensor")
    return value.item()


def grad_check(
    fn: Callable[[List[Tensor]], Tensor],
    point: Sequence[np.ndarray],
    eps: float = 1e-6,
) -> float:
    """
    用中心差分检查反向模式梯度

    Args:
        fn: 接收叶子列表、返回标量 Tensor 的函数
        point: 各叶子的取值
        eps: 差分步长

    Returns:
        所有坐标上的最大相对误差，分母为 max(|analytic|, |numeric|, 1e-8)
    """
    if not eps > 0:
        raise ValidationError(f"grad_check: eps 必须为正数, 实际为 {eps}")

    arrays = [np.array(p, dtype=np.float64) for p in point]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    loss = fn(leaves)
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ShapeError("grad_check", [getattr(loss, "shape", ())], "函数必须返回标量 Tensor")
    analytic = gradients(loss, leaves)

    worst = 0.0
    with no_grad():
        for k, base in enumerate(arrays):
            flat = base.reshape(-1)
            flat_grad = analytic[k].reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + eps
                f_plus = _evaluate(fn, arrays)
                flat[j] = original - eps
                f_minus = _evaluate(fn, arrays)
                flat[j] = original
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(flat_grad[j])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)

    logger.debug("grad_check: %d leaves, eps=%g, max relative error=%.3e", len(arrays), eps, worst)
    return worst

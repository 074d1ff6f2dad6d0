from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from mvdr_separation.model import Parameters
from mvdr_separation.trainer.config import OptimizerConfig


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """按全局范数裁剪，返回 (裁剪后的梯度, 裁剪前的范数)"""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0:
        return grads, norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


class Adam:
    """Adam 优化器，直接原地更新 Parameters 中叶子的数据"""

    def __init__(self, params: Parameters, config: OptimizerConfig):
        self.params = params
        self.config = config
        self.step_count = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.step_count += 1
        bias1 = 1.0 - cfg.beta1 ** self.step_count
        bias2 = 1.0 - cfg.beta2 ** self.step_count
        for name, tensor in self.params.items():
            g = grads[name]
            self._m[name] = cfg.beta1 * self._m[name] + (1.0 - cfg.beta1) * g
            self._v[name] = cfg.beta2 * self._v[name] + (1.0 - cfg.beta2) * g * g
            m_hat = self._m[name] / bias1
            v_hat = self._v[name] / bias2
            tensor.data = tensor.data - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)

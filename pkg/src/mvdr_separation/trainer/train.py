from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from mvdr_separation.autodiff import backward
from mvdr_separation.dsp import read_mono_sources
from mvdr_separation.errors import NonFiniteError, NumericalError, ValidationError
from mvdr_separation.model import Parameters, init_params, save_checkpoint
from mvdr_separation.sim import SimulatedExample, generate_example
from mvdr_separation.trainer.config import TrainConfig
from mvdr_separation.trainer.optimizer import Adam, clip_by_global_norm
from mvdr_separation.trainer.pipeline import SeparationPipeline
from mvdr_separation.utils.logger import add_jsonl_handler, get_logger, log_record, remove_jsonl_handler

logger = get_logger(__name__)

# 按需生成时缓存的样本条数
EXAMPLE_CACHE_SIZE = 32
# 滑动平均窗口（步）
LOSS_WINDOW = 10


@dataclass
class TrainResult:
    """
    训练结果

    Attributes:
        checkpoint: 最终检查点路径
        log: 每步记录 {step, id, loss_db, grad_norm, perm}
        checkpoints: 所有保存过的检查点
        params: 训练后的参数
    """
    checkpoint: Path
    log: List[Dict[str, Any]]
    checkpoints: List[Path] = field(default_factory=list)
    params: Optional[Parameters] = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([entry["loss_db"] for entry in self.log])

    def moving_average(self, window: int = LOSS_WINDOW) -> np.ndarray:
        losses = self.losses
        if losses.size < window:
            return losses.copy()
        return np.convolve(losses, np.ones(window) / window, mode="valid")


class ExampleSource:
    """
    训练样本来源：给定列表，或按 (seed, index) 按需仿真并缓存最近使用的样本
    """

    def __init__(self, config: TrainConfig, examples: Optional[Sequence[SimulatedExample]] = None):
        self.config = config
        self._examples = list(examples) if examples is not None else None
        self._cache: "OrderedDict[int, SimulatedExample]" = OrderedDict()
        self._pool = ()
        if self._examples is None and config.dataset.source_files:
            self._pool = read_mono_sources(config.dataset.source_files)
        if len(self) == 0:
            raise ValidationError("训练集为空")

    def __len__(self) -> int:
        if self._examples is not None:
            return len(self._examples)
        return self.config.dataset.num_examples

    def __getitem__(self, index: int) -> SimulatedExample:
        if self._examples is not None:
            return self._examples[index]
        if index in self._cache:
            self._cache.move_to_end(index)
            return self._cache[index]
        example = generate_example(self.config.dataset, self.config.seed, index, self._pool)
        self._cache[index] = example
        if len(self._cache) > EXAMPLE_CACHE_SIZE:
            self._cache.popitem(last=False)
        return example


def step_order(num_examples: int, steps: int, seed: int) -> List[int]:
    """每轮打乱一次的样本顺序，只依赖 seed"""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    order: List[int] = []
    while len(order) < steps:
        order.extend(int(i) for i in rng.permutation(num_examples))
    return order[:steps]


def heldout_examples(config: TrainConfig, count: Optional[int] = None) -> List[SimulatedExample]:
    """评估用样本：index 从训练集之后开始，与训练样本不重叠"""
    count = config.eval_examples if count is None else count
    pool = read_mono_sources(config.dataset.source_files) if config.dataset.source_files else ()
    start = config.dataset.num_examples
    return [generate_example(config.dataset, config.seed, start + k, pool) for k in range(count)]


def _checkpoint_meta(config: TrainConfig, step: int, log: List[Dict[str, Any]]) -> Dict[str, Any]:
    recent = [entry["loss_db"] for entry in log[-LOSS_WINDOW:]]
    return {
        "step": step,
        "train_config": config.to_dict(),
        "recent_loss_db": float(np.mean(recent)) if recent else None,
    }


def train(config: TrainConfig, examples: Optional[Sequence[SimulatedExample]] = None) -> TrainResult:
    """
    训练循环（批大小 1）

    每步: 取样本 -> STFT -> 掩蔽 -> 协方差 -> 幂迭代 RTF -> MVDR -> iSTFT
    -> PIT 损失 -> 反向传播 -> 全局范数裁剪 -> Adam

    Args:
        config: 训练配置
        examples: 训练样本；为 None 时按 config.dataset 按需仿真

    Returns:
        TrainResult

    Raises:
        NumericalError: 损失或梯度出现 NaN/Inf（带步数与样本 id）
    """
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    config.save(output_dir / "train_config.json")
    log_path = output_dir / "train.jsonl"
    add_jsonl_handler(log_path)

    params = init_params(config.net)
    pipeline = SeparationPipeline.from_config(config, params)
    optimizer = Adam(params, config.optimizer)
    source = ExampleSource(config, examples)
    order = step_order(len(source), config.steps, config.seed)
    log: List[Dict[str, Any]] = []
    checkpoints: List[Path] = []

    logger.info(
        "开始训练: steps=%d, loss=%s, enhancement=%s, 参数量=%d",
        config.steps, config.loss.kind.value, config.enhancement.value, params.num_values,
    )
    try:
        for step, index in enumerate(order, start=1):
            example = source[index]
            params.zero_grad()
            try:
                loss, perm, _ = pipeline.training_loss(example)
                if not np.isfinite(loss.item()):
                    raise NonFiniteError(loss.label, "损失")
                found = backward(loss)
            except NonFiniteError as e:
                log_record(logger, "train.abort", step=step, id=example.example_id, reason=str(e))
                raise NumericalError(f"第 {step} 步出现非有限值 (样本 {example.example_id}): {e}") from e

            grads = {name: found.get(tensor, np.zeros_like(tensor.data)) for name, tensor in params.items()}
            grads, norm = clip_by_global_norm(grads, config.grad_clip_norm)
            optimizer.step(grads)

            entry = log_record(
                logger, "train.step",
                step=step, id=example.example_id, loss_db=float(loss.item()), grad_norm=norm, perm=list(perm),
            )
            log.append(entry)
            if step % config.eval_every == 0 and step < config.steps:
                meta = _checkpoint_meta(config, step, log)
                path = save_checkpoint(output_dir / f"step{step:06d}.npz", params, meta)
                checkpoints.append(path)
                log_record(logger, "train.checkpoint", step=step, path=str(path), recent_loss_db=meta["recent_loss_db"])

        final = save_checkpoint(output_dir / "final.npz", params, _checkpoint_meta(config, config.steps, log))
        checkpoints.append(final)
    finally:
        remove_jsonl_handler(log_path)

    logger.info("训练完成: %d 步, 检查点 %s", config.steps, final)
    return TrainResult(final, log, checkpoints, params)

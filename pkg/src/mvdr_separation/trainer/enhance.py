from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Tuple, Union

from mvdr_separation.autodiff import no_grad
from mvdr_separation.dsp import MultichannelWaveform, Waveform, as_multichannel, read_wav, write_wav
from mvdr_separation.enums import Enhancement, RtfMode
from mvdr_separation.errors import ValidationError
from mvdr_separation.model import load_checkpoint
from mvdr_separation.sim import read_manifest
from mvdr_separation.trainer.config import TrainConfig
from mvdr_separation.trainer.pipeline import SeparationPipeline
from mvdr_separation.utils.logger import get_logger, log_record

logger = get_logger(__name__)


def load_pipeline(checkpoint: Union[str, Path]) -> Tuple[SeparationPipeline, TrainConfig]:
    """读取检查点并按其中保存的训练配置重建流水线"""
    params, meta = load_checkpoint(checkpoint)
    if "train_config" not in meta:
        raise ValidationError(f"检查点缺少训练配置: {checkpoint}")
    config = TrainConfig.from_dict(meta["train_config"])
    if config.net.to_dict() != params.config.to_dict():
        raise ValidationError("检查点中的网络配置与训练配置不一致")
    return SeparationPipeline.from_config(config, params), config


def enhance_waveform(
    pipeline: SeparationPipeline,
    wave: Union[MultichannelWaveform, Waveform],
    expected_channels: Optional[int] = None,
    rtf_mode: Union[RtfMode, str] = RtfMode.EIGH,
    enhancement: Optional[Union[Enhancement, str]] = None,
    eta_max: Optional[int] = None,
) -> List[Waveform]:
    """
    不记录计算图的完整推理

    Args:
        pipeline: 分离流水线
        wave: 多通道输入
        expected_channels: 训练时的通道数 M
        rtf_mode: 评估时默认使用特征分解
        enhancement: 提取方式，None 时沿用训练配置
        eta_max: 幂迭代次数（仅 power_iteration）

    Returns:
        每个说话人一条单通道波形，长度与输入相同

    Raises:
        ValidationError: 通道数不符
    """
    wave = as_multichannel(wave)
    if expected_channels is not None and wave.num_channels != expected_channels:
        raise ValidationError(f"输入通道数 {wave.num_channels} 与训练通道数 {expected_channels} 不一致")
    with no_grad():
        output = pipeline.separate(wave, enhancement, rtf_mode, eta_max)
    return output.estimate_waveforms()


def write_estimates(estimates: List[Waveform], output_dir: Union[str, Path], encoding: str = "float32") -> List[Path]:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, wave in enumerate(estimates):
        paths.append(write_wav(output_dir / f"speaker{i}.wav", wave, encoding=encoding))
    return paths


def enhance(
    checkpoint: Union[str, Path],
    input_wav: Union[str, Path, MultichannelWaveform],
    rtf_mode: Union[RtfMode, str] = RtfMode.EIGH,
    output_dir: Union[str, Path] = "enhanced",
    enhancement: Optional[Union[Enhancement, str]] = None,
    eta_max: Optional[int] = None,
) -> List[Path]:
    """
    增强一条多通道录音，写出 speaker{i}.wav

    Returns:
        写出的文件路径
    """
    pipeline, config = load_pipeline(checkpoint)
    wave = input_wav if isinstance(input_wav, MultichannelWaveform) else read_wav(input_wav)
    estimates = enhance_waveform(pipeline, wave, config.num_channels, rtf_mode, enhancement, eta_max)
    paths = write_estimates(estimates, output_dir)
    logger.info("增强完成: %d 个说话人 -> %s", len(paths), output_dir)
    return paths


def enhance_dataset(
    checkpoint: Union[str, Path],
    manifest: Union[str, Path],
    output_dir: Union[str, Path],
    rtf_mode: Union[RtfMode, str] = RtfMode.EIGH,
    enhancement: Optional[Union[Enhancement, str]] = None,
    eta_max: Optional[int] = None,
) -> Path:
    """对清单中每条混合做增强，输出到 output_dir/<id>/speaker{i}.wav"""
    pipeline, config = load_pipeline(checkpoint)
    manifest = Path(manifest)
    root = manifest if manifest.is_dir() else manifest.parent
    output_dir = Path(output_dir)
    for record in read_manifest(manifest):
        wave = read_wav(root / record["files"]["mixture"])
        estimates = enhance_waveform(pipeline, wave, config.num_channels, rtf_mode, enhancement, eta_max)
        write_estimates(estimates, output_dir / record["id"])
        log_record(logger, "enhance.example", id=record["id"], speakers=len(estimates))
    return output_dir

"""
Gradio Web 界面：上传多通道 WAV，下载每个说话人的增强结果
"""

from __future__ import annotations

import tempfile
import threading
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import gradio as gr

from mvdr_separation.dsp import read_wav
from mvdr_separation.trainer.config import parse_rtf
from mvdr_separation.trainer.enhance import enhance_waveform, load_pipeline, write_estimates
from mvdr_separation.trainer.pipeline import SeparationPipeline
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)

EnhanceCallback = Callable[[str, str, Optional[str]], Tuple[List[str], Dict[str, Any]]]


class GradioUI:
    """Gradio 界面状态：最近的增强记录"""

    def __init__(self):
        self.runs: List[Dict[str, Any]] = []
        self.lock = threading.Lock()

    def add_run(self, summary: Dict[str, Any]):
        with self.lock:
            self.runs.append(summary)
            # 只保留最近 20 条
            if len(self.runs) > 20:
                self.runs.pop(0)

    def get_runs(self) -> List[Dict[str, Any]]:
        with self.lock:
            return list(self.runs)


def enhance_upload(
    pipeline: SeparationPipeline,
    expected_channels: int,
    wav_path: Union[str, Path],
    rtf: str = "eigh",
    enhancement: Optional[str] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> Tuple[List[str], Dict[str, Any]]:
    """
    处理一次上传（不依赖 Gradio 组件，便于测试）

    Args:
        pipeline: 已加载的流水线
        expected_channels: 训练通道数
        wav_path: 上传文件路径
        rtf: "eigh" 或 "power:<n>"
        enhancement: "mvdr" / "masking"，None 时沿用训练配置
        output_dir: 输出目录，None 时使用临时目录

    Returns:
        (每个说话人的 WAV 路径, 摘要)
    """
    mode, eta_max = parse_rtf(rtf)
    wave = read_wav(wav_path)
    estimates = enhance_waveform(pipeline, wave, expected_channels, mode, enhancement, eta_max)
    output_dir = Path(output_dir) if output_dir is not None else Path(tempfile.mkdtemp(prefix="mvdr_sep_"))
    paths = [str(p) for p in write_estimates(estimates, output_dir)]
    summary = {
        "input": str(wav_path),
        "channels": wave.num_channels,
        "duration_sec": round(len(wave) / wave.sample_rate, 3),
        "rtf": mode.value,
        "speakers": len(paths),
    }
    return paths, summary


def make_enhance_callback(checkpoint: Union[str, Path]) -> EnhanceCallback:
    """加载检查点一次，返回界面使用的回调 (wav_path, rtf, enhancement) -> (paths, summary)"""
    pipeline, config = load_pipeline(checkpoint)

    def callback(wav_path: str, rtf: str, enhancement: Optional[str]):
        return enhance_upload(pipeline, config.num_channels, wav_path, rtf, enhancement)

    return callback


def create_gradio_app(enhance_callback: Optional[EnhanceCallback] = None):
    """
    创建 Gradio 应用

    Args:
        enhance_callback: (wav_path, rtf, enhancement) -> (paths, summary)

    Returns:
        (app, ui)
    """
    ui = GradioUI()

    def run_fn(wav_path, rtf, enhancement):
        if not wav_path:
            return [], {"error": "请先上传多通道 WAV"}, ui.get_runs()
        if enhance_callback is None:
            return [], {"error": "未加载检查点"}, ui.get_runs()
        try:
            paths, summary = enhance_callback(wav_path, rtf, enhancement or None)
        except Exception as e:
            logger.error("增强失败: %s", e, exc_info=True)
            return [], {"error": str(e)}, ui.get_runs()
        ui.add_run(summary)
        return paths, summary, ui.get_runs()

    with gr.Blocks(title="MVDR 多说话人分离") as app:
        gr.Markdown("# 掩蔽 MVDR 多说话人分离")

        with gr.Row():
            with gr.Column(scale=1):
                upload = gr.File(label="多通道 WAV", type="filepath", file_types=[".wav"])
                rtf = gr.Dropdown(
                    choices=["eigh", "power:3", "power:30"], value="eigh", label="RTF 估计"
                )
                enhancement = gr.Dropdown(
                    choices=["", "mvdr", "masking"], value="", label="提取方式（空 = 训练配置）"
                )
                run_btn = gr.Button("分离", variant="primary")

            with gr.Column(scale=1):
                outputs = gr.File(label="各说话人估计", file_count="multiple")
                summary = gr.JSON(label="本次摘要")
                history = gr.JSON(label="最近记录")

        run_btn.click(run_fn, inputs=[upload, rtf, enhancement], outputs=[outputs, summary, history])

    return app, ui

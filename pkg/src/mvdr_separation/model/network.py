from __future__ import annotations

from typing import List

import numpy as np

from mvdr_separation.autodiff import Tensor, as_tensor, concatenate, sigmoid, tanh
from mvdr_separation.beamforming import MaskSet
from mvdr_separation.dsp import Spectrogram, log_feature
from mvdr_separation.errors import ShapeError
from mvdr_separation.model.params import Parameters

# 特征归一化时标准差下限
FEATURE_STD_FLOOR = 1e-5


def normalize_features(features: np.ndarray) -> np.ndarray:
    """逐频点在时间上做均值/方差归一化"""
    features = np.asarray(features, dtype=np.float64)
    mean = features.mean(axis=0, keepdims=True)
    std = features.std(axis=0, keepdims=True)
    return (features - mean) / np.maximum(std, FEATURE_STD_FLOOR)


def gru_direction(params: Parameters, prefix: str, inputs: Tensor, reverse: bool = False) -> Tensor:
    """
    单方向 GRU（门顺序 r, z, n）

    r = σ(x W_ir + b_ir + h W_hr + b_hr)
    z = σ(x W_iz + b_iz + h W_hz + b_hz)
    n = tanh(x W_in + b_in + r ⊙ (h W_hn + b_hn))
    h = (1 - z) ⊙ n + z ⊙ h

    Args:
        inputs: (T, D)

    Returns:
        (T, H)
    """
    w_ih, w_hh = params[f"{prefix}.w_ih"], params[f"{prefix}.w_hh"]
    b_ih, b_hh = params[f"{prefix}.b_ih"], params[f"{prefix}.b_hh"]
    hidden = w_hh.shape[0]
    num_frames = inputs.shape[0]

    gates_x = inputs @ w_ih + b_ih  # (T, 3H)
    h = Tensor(np.zeros((1, hidden)))
    outputs: List[Tensor] = [None] * num_frames
    steps = range(num_frames - 1, -1, -1) if reverse else range(num_frames)
    for t in steps:
        gx = gates_x[t:t + 1]
        gh = h @ w_hh + b_hh
        r = sigmoid(gx[:, :hidden] + gh[:, :hidden])
        z = sigmoid(gx[:, hidden:2 * hidden] + gh[:, hidden:2 * hidden])
        n = tanh(gx[:, 2 * hidden:] + r * gh[:, 2 * hidden:])
        h = (1.0 - z) * n + z * h
        outputs[t] = h
    return concatenate(outputs, axis=0)


def forward(params: Parameters, features) -> MaskSet:
    """
    特征 (T, F) -> 掩蔽 (3, T, F, I)

    循环层 -> tanh 投影（保持宽度）-> 线性投影到 F·3·I -> sigmoid -> reshape
    """
    config = params.config
    x = as_tensor(features)
    if x.ndim != 2 or x.shape[1] != config.num_bins:
        raise ShapeError("mask_estimator.forward", [x.shape], f"特征宽度应为 {config.num_bins}")
    num_frames = x.shape[0]

    for layer in range(config.recurrent_layers):
        outputs = [
            gru_direction(params, f"gru{layer}.{direction}", x, reverse=(direction == "bw"))
            for direction in config.directions
        ]
        x = outputs[0] if len(outputs) == 1 else concatenate(outputs, axis=1)

    x = tanh(x @ params["proj1.w"] + params["proj1.b"])
    logits = x @ params["proj2.w"] + params["proj2.b"]
    masks = sigmoid(logits).reshape(num_frames, 3, config.num_speakers, config.num_bins)
    return MaskSet(masks.transpose(1, 0, 3, 2))


def estimate_masks(params: Parameters, spec: Spectrogram, reference_channel: int = 0) -> MaskSet:
    """参考通道 log(1 + |y|) 特征，归一化后送入网络"""
    return forward(params, normalize_features(log_feature(spec, reference_channel)))

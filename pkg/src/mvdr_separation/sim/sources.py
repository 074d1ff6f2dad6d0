"""
内置“类语音”合成声源：谐波（带基频抖动）+ 共振峰滤波、清音段为有色噪声、
音节级开关包络。用于不依赖外部语料的测试与桌面规模训练。
"""

from __future__ import annotations

from typing import List

import numpy as np
from scipy import signal as sps

from mvdr_separation.dsp import Waveform

TARGET_RMS = 0.1


def _syllable_envelope(length: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """音节/停顿交替的包络，边缘为升余弦过渡"""
    envelope = np.zeros(length)
    pos = int(rng.uniform(0.0, 0.1) * sample_rate)
    ramp = max(1, int(0.015 * sample_rate))
    while pos < length:
        syllable = int(rng.uniform(0.12, 0.35) * sample_rate)
        end = min(pos + syllable, length)
        segment = np.ones(end - pos)
        r = min(ramp, len(segment) // 2)
        if r > 0:
            fade = 0.5 * (1.0 - np.cos(np.pi * np.arange(r) / r))
            segment[:r] *= fade
            segment[-r:] *= fade[::-1]
        envelope[pos:end] = segment * rng.uniform(0.5, 1.0)
        pos = end + int(rng.uniform(0.03, 0.15) * sample_rate)
    return envelope


def _voiced(length: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(length) / sample_rate
    f0 = rng.uniform(90.0, 220.0)
    vibrato = 1.0 + 0.04 * np.sin(2.0 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    drift = 1.0 + 0.03 * np.cumsum(rng.standard_normal(length)) / np.sqrt(length)
    track = f0 * vibrato * drift
    phase = 2.0 * np.pi * np.cumsum(track) / sample_rate
    harmonics = int((0.45 * sample_rate) // (f0 * 1.1))
    voiced = np.zeros(length)
    for h in range(1, max(harmonics, 1) + 1):
        voiced += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
    # 共振峰
    nyquist = sample_rate / 2.0
    for formant in (rng.uniform(300, 900), rng.uniform(900, 2200), rng.uniform(2200, 3000)):
        if formant < 0.95 * nyquist:
            b, a = sps.iirpeak(formant / nyquist, Q=rng.uniform(3.0, 8.0))
            voiced = voiced + 0.8 * sps.lfilter(b, a, voiced)
    return voiced


def _unvoiced(length: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(length)
    cutoff = min(rng.uniform(1500.0, 3000.0), 0.45 * sample_rate) / (sample_rate / 2.0)
    b, a = sps.butter(2, cutoff, btype="highpass")
    return sps.lfilter(b, a, noise)


def synthetic_speech(length: int, sample_rate: int, rng: np.random.Generator) -> Waveform:
    """
    生成一段类语音信号（RMS 归一化到 0.1）

    Args:
        length: 样本数
        sample_rate: 采样率
        rng: 随机数生成器（决定全部随机性）
    """
    voiced = _voiced(length, sample_rate, rng)
    unvoiced = _unvoiced(length, sample_rate, rng)
    voicing = _syllable_envelope(length, sample_rate, rng)
    friction = _syllable_envelope(length, sample_rate, rng) * 0.3
    samples = voicing * voiced / (np.std(voiced) + 1e-12) + friction * unvoiced / (np.std(unvoiced) + 1e-12)
    rms = np.sqrt(np.mean(samples ** 2))
    if rms == 0:
        samples = rng.standard_normal(length)
        rms = np.sqrt(np.mean(samples ** 2))
    return Waveform(samples * (TARGET_RMS / rms), sample_rate)


def synthetic_sources(count: int, length: int, sample_rate: int, rng: np.random.Generator) -> List[Waveform]:
    return [synthetic_speech(length, sample_rate, rng) for _ in range(count)]

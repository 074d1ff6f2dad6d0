"""
鞋盒房间镜像源法 RIR

- 吸声系数由 Sabine 公式从 T60 反推，反射系数 β = sqrt(1 - α)
- 每个镜像源幅度 β^反射次数 / (4π d)，用 17 点加窗 sinc 放置分数延迟
- 声速 343 m/s
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from mvdr_separation.errors import ValidationError
from mvdr_separation.utils.logger import get_logger

logger = get_logger(__name__)

SPEED_OF_SOUND = 343.0
# 分数延迟插值半宽（共 2 * 8 + 1 = 17 点）
SINC_HALF_WIDTH = 8
# 未指定 RIR 时长时取 T60 的倍数
DEFAULT_DURATION_FACTOR = 1.2

Vector3 = Tuple[float, float, float]


@dataclass
class RoomSpec:
    """
    鞋盒房间与阵列/声源几何

    Attributes:
        dimensions: 房间尺寸 (m)
        t60: 混响时间 (s)
        mic_positions: 麦克风坐标
        source_positions: 声源坐标
        sample_rate: 采样率
        max_order: 最大反射次数（None 表示只按 RIR 时长截断）
        rir_duration_sec: RIR 时长（None 表示 1.2 * t60 加直达声延迟）
        absorption: 直接指定吸声系数，覆盖由 T60 推出的值
        position_jitter_m: 镜像源位置随机扰动的标准差，0 表示经典确定性镜像法
    """
    dimensions: Vector3
    t60: float
    mic_positions: List[Vector3]
    source_positions: List[Vector3]
    sample_rate: int = 8000
    max_order: Optional[int] = None
    rir_duration_sec: Optional[float] = None
    absorption: Optional[float] = None
    position_jitter_m: float = 0.0

    def __post_init__(self):
        dims = np.asarray(self.dimensions, dtype=np.float64)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise ValidationError(f"房间尺寸不合法: {self.dimensions}")
        if not self.t60 > 0:
            raise ValidationError(f"t60 必须 > 0: {self.t60}")
        if not self.mic_positions or not self.source_positions:
            raise ValidationError("至少需要一个麦克风和一个声源")
        for label, points in (("麦克风", self.mic_positions), ("声源", self.source_positions)):
            for p in points:
                p = np.asarray(p, dtype=np.float64)
                if p.shape != (3,) or np.any(p <= 0) or np.any(p >= dims):
                    raise ValidationError(f"{label}位置 {tuple(p)} 不在房间内部 {tuple(dims)}")
        if self.sample_rate <= 0:
            raise ValidationError(f"采样率必须为正数: {self.sample_rate}")
        if self.max_order is not None and self.max_order < 0:
            raise ValidationError(f"max_order 必须 >= 0: {self.max_order}")
        if self.position_jitter_m < 0:
            raise ValidationError(f"position_jitter_m 必须 >= 0: {self.position_jitter_m}")

    @property
    def volume(self) -> float:
        return float(np.prod(self.dimensions))

    @property
    def surface(self) -> float:
        x, y, z = self.dimensions
        return 2.0 * (x * y + x * z + y * z)

    @property
    def num_mics(self) -> int:
        return len(self.mic_positions)

    def sabine_absorption(self) -> float:
        """α = 0.161 V / (S · T60)"""
        if self.absorption is not None:
            return float(self.absorption)
        return 0.161 * self.volume / (self.surface * self.t60)

    def reflection_coefficient(self) -> float:
        alpha = self.sabine_absorption()
        if alpha > 1.0 or alpha < 0.0:
            raise ValidationError(
                f"T60={self.t60}s 对房间 {tuple(self.dimensions)} 推出吸声系数 α={alpha:.3f}，超出 [0, 1]"
            )
        return float(np.sqrt(1.0 - alpha))


@dataclass
class RIR:
    """
    多通道房间冲激响应

    Attributes:
        taps: (M, L_τ)
        sample_rate: 采样率
        direct_index: 每个通道直达声峰值的位置
    """
    taps: np.ndarray
    sample_rate: int
    direct_index: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim == 1:
            taps = taps[None, :]
        if taps.ndim != 2 or taps.shape[1] == 0:
            raise ValidationError(f"RIR 需要 (M, L) 数组，实际形状 {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ValidationError("RIR 含有 NaN/Inf")
        self.taps = taps
        if not self.direct_index:
            self.direct_index = tuple(int(i) for i in np.argmax(np.abs(taps), axis=1))
        if len(self.direct_index) != taps.shape[0]:
            raise ValidationError("direct_index 数量与通道数不一致")

    @property
    def num_channels(self) -> int:
        return self.taps.shape[0]

    @property
    def length(self) -> int:
        return self.taps.shape[1]


def circular_array(
    center: Sequence[float],
    radius: float = 0.0425,
    count: int = 6,
    with_center: bool = True,
    rotation: float = 0.0,
) -> List[Vector3]:
    """水平圆阵（默认 6 个圆周麦克风 + 1 个中心麦克风），第 0 个为中心麦克风"""
    cx, cy, cz = (float(v) for v in center)
    positions: List[Vector3] = [(cx, cy, cz)] if with_center else []
    for k in range(count):
        angle = rotation + 2.0 * np.pi * k / count
        positions.append((cx + radius * np.cos(angle), cy + radius * np.sin(angle), cz))
    return positions


def _axis_images(length: float, source: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """单个坐标轴上的镜像位置 (1 - 2q) s + 2 n L 与反射次数 |n - q| + |n|"""
    n = np.arange(-count, count + 1)
    positions = np.concatenate([source + 2.0 * n * length, -source + 2.0 * n * length])
    reflections = np.concatenate([2 * np.abs(n), np.abs(n - 1) + np.abs(n)])
    return positions, reflections


def _fractional_pulses(delays: np.ndarray, amplitudes: np.ndarray, length: int) -> np.ndarray:
    """在 round(τ) ± 8 上放置 Hann 加窗 sinc"""
    offsets = np.arange(-SINC_HALF_WIDTH, SINC_HALF_WIDTH + 1)
    centers = np.round(delays).astype(np.int64)
    index = centers[:, None] + offsets[None, :]
    frac = index - delays[:, None]
    window = 0.5 * (1.0 + np.cos(np.pi * frac / (SINC_HALF_WIDTH + 1)))
    values = amplitudes[:, None] * np.sinc(frac) * window
    valid = (index >= 0) & (index < length)
    return np.bincount(index[valid], weights=values[valid], minlength=length)[:length]


def image_method_rir(room: RoomSpec, source_index: int, rng_seed: Optional[int] = None) -> RIR:
    """
    镜像源法 RIR（所有麦克风）

    Args:
        room: 房间描述
        source_index: 声源下标
        rng_seed: 镜像源位置扰动的随机种子（position_jitter_m > 0 时使用）

    Raises:
        ValidationError: 吸声系数超出 [0, 1] 或下标越界
    """
    if not 0 <= source_index < len(room.source_positions):
        raise ValidationError(f"声源下标 {source_index} 超出范围")
    beta = room.reflection_coefficient()
    fs = room.sample_rate
    dims = np.asarray(room.dimensions, dtype=np.float64)
    source = np.asarray(room.source_positions[source_index], dtype=np.float64)
    mics = np.asarray(room.mic_positions, dtype=np.float64)

    direct = np.linalg.norm(mics - source, axis=1)
    duration = room.rir_duration_sec
    if duration is None:
        duration = DEFAULT_DURATION_FACTOR * room.t60 + float(direct.max()) / SPEED_OF_SOUND
    length = int(np.ceil(duration * fs)) + SINC_HALF_WIDTH + 1
    max_distance = duration * SPEED_OF_SOUND
    rng = np.random.default_rng(rng_seed)

    taps = np.zeros((len(mics), length))
    direct_index = []
    for m, mic in enumerate(mics):
        axes = []
        for k in range(3):
            count = int(np.ceil(max_distance / (2.0 * dims[k]))) + 1
            axes.append(_axis_images(dims[k], source[k], count))
        (px, rx), (py, ry), (pz, rz) = axes
        dx2 = (px - mic[0]) ** 2
        dy2 = (py - mic[1]) ** 2
        dz2 = (pz - mic[2]) ** 2
        dist2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
        order = rx[:, None, None] + ry[None, :, None] + rz[None, None, :]
        keep = dist2 <= max_distance ** 2
        if room.max_order is not None:
            keep &= order <= room.max_order
        ix, iy, iz = np.nonzero(keep)
        positions = np.stack([px[ix], py[iy], pz[iz]], axis=1)
        orders = order[ix, iy, iz]
        if room.position_jitter_m > 0:
            jitter = rng.normal(0.0, room.position_jitter_m, size=positions.shape)
            jitter[orders == 0] = 0.0
            positions = positions + jitter
        distances = np.maximum(np.linalg.norm(positions - mic, axis=1), 1e-3)
        amplitudes = beta ** orders / (4.0 * np.pi * distances)
        taps[m] = _fractional_pulses(distances / SPEED_OF_SOUND * fs, amplitudes, length)
        direct_index.append(int(np.round(direct[m] / SPEED_OF_SOUND * fs)))
        logger.debug("image_method_rir: mic=%d, images=%d, length=%d", m, len(distances), length)

    return RIR(taps, fs, tuple(direct_index))


def split_rir(rir: RIR, boundary_ms: float = 50.0) -> Tuple[RIR, RIR]:
    """
    从直达声峰值起 boundary_ms 处切分为早期/晚期两部分，early + late == rir
    """
    offset = int(round(boundary_ms * rir.sample_rate / 1000.0))
    early = np.zeros_like(rir.taps)
    late = np.zeros_like(rir.taps)
    for m in range(rir.num_channels):
        split = min(rir.direct_index[m] + offset, rir.length)
        early[m, :split] = rir.taps[m, :split]
        late[m, split:] = rir.taps[m, split:]
    return RIR(early, rir.sample_rate, rir.direct_index), RIR(late, rir.sample_rate, rir.direct_index)


def energy_decay_curve(taps: np.ndarray) -> np.ndarray:
    """Schroeder 反向积分能量衰减曲线 (dB，归一化到 0 dB)"""
    energy = np.cumsum(np.asarray(taps, dtype=np.float64)[::-1] ** 2)[::-1]
    if energy[0] <= 0:
        raise ValidationError("RIR 能量为 0")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def schroeder_t60(taps: np.ndarray, sample_rate: int, fit_range_db: Tuple[float, float] = (-5.0, -25.0)) -> float:
    """
    由能量衰减曲线估计 T60：在 fit_range_db 内线性拟合并外推到 -60 dB

    衰减不足 fit_range_db 下限时退回到 -5 ~ -15 dB。
    """
    edc = energy_decay_curve(taps)
    upper, lower = fit_range_db
    if edc.min() > lower:
        lower = -15.0
        if edc.min() > lower:
            raise ValidationError(f"RIR 衰减不足 15 dB，无法估计 T60 (最小 {edc.min():.1f} dB)")
    region = np.nonzero((edc <= upper) & (edc >= lower))[0]
    if region.size < 2:
        raise ValidationError("能量衰减曲线拟合区间过短")
    times = region / sample_rate
    slope, _ = np.polyfit(times, edc[region], 1)
    if slope >= 0:
        raise ValidationError("能量衰减曲线斜率非负")
    return float(-60.0 / slope)

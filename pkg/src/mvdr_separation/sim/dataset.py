"""
仿真数据集

每条样本的随机数由 SeedSequence([seed, index]) 派生，与生成顺序、并行调度无关。
落盘布局:
    <root>/manifest.jsonl
    <root>/<id>/mixture.wav            M 通道
    <root>/<id>/source<i>.wav          干声源
    <root>/<id>/early<i>.wav           早期像 (M 通道)
    <root>/<id>/late<i>.wav            晚期混响 (M 通道)
    <root>/<id>/noise.wav              噪声 (M 通道)
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from mvdr_separation.dsp import MultichannelWaveform, Waveform, read_mono_sources, read_wav, write_wav
from mvdr_separation.enums import OverlapMode
from mvdr_separation.errors import ValidationError
from mvdr_separation.sim.mixture import SimulatedExample, synthesize_mixture
from mvdr_separation.sim.room import RoomSpec, circular_array, image_method_rir, schroeder_t60
from mvdr_separation.sim.sources import synthetic_speech
from mvdr_separation.utils.logger import get_logger, log_record, to_jsonable

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.jsonl"
# 声源/阵列离墙的最小距离
WALL_MARGIN_M = 0.3
_MAX_PLACEMENT_TRIES = 200


@dataclass
class DatasetConfig:
    """数据集配置（默认为桌面规模: 8 kHz，7 麦克风圆阵，2 个说话人）"""
    num_examples: int = 200
    num_speakers: int = 2
    sample_rate: int = 8000
    utterance_sec: float = 2.0
    room_min: Tuple[float, float, float] = (4.0, 3.5, 2.5)
    room_max: Tuple[float, float, float] = (7.0, 6.0, 3.2)
    t60_range: Tuple[float, float] = (0.15, 0.6)
    snr_range: Tuple[float, float] = (10.0, 20.0)
    array_radius: float = 0.0425
    array_ring_mics: int = 6
    array_center_mic: bool = True
    source_distance_range: Tuple[float, float] = (0.8, 2.0)
    min_source_angle_deg: float = 5.0
    full_overlap_ratio: float = 0.5
    partial_overlap_range: Tuple[float, float] = (0.3, 0.8)
    early_boundary_ms: float = 50.0
    rir_duration_sec: Optional[float] = None
    max_order: Optional[int] = None
    position_jitter_m: float = 0.0
    reference_channel: int = 0
    source_files: List[str] = field(default_factory=list)
    workers: int = 1

    def __post_init__(self):
        self.room_min = tuple(self.room_min)
        self.room_max = tuple(self.room_max)
        self.t60_range = tuple(self.t60_range)
        self.snr_range = tuple(self.snr_range)
        self.source_distance_range = tuple(self.source_distance_range)
        self.partial_overlap_range = tuple(self.partial_overlap_range)
        self.source_files = list(self.source_files)
        if self.num_examples < 0 or self.num_speakers < 1:
            raise ValidationError("num_examples 必须 >= 0 且 num_speakers >= 1")
        for name in ("t60_range", "snr_range", "source_distance_range", "partial_overlap_range"):
            low, high = getattr(self, name)
            if low > high:
                raise ValidationError(f"{name} 下限大于上限: {getattr(self, name)}")
        low, high = self.partial_overlap_range
        if not 0.0 < low <= high < 1.0:
            raise ValidationError(f"partial_overlap_range 必须在 (0, 1) 内: {self.partial_overlap_range}")
        if not 0.0 <= self.full_overlap_ratio <= 1.0:
            raise ValidationError(f"full_overlap_ratio 必须在 [0, 1]: {self.full_overlap_ratio}")
        if not 0 <= self.reference_channel < self.num_channels:
            raise ValidationError(f"参考通道 {self.reference_channel} 超出范围 [0, {self.num_channels})")
        if self.rir_duration_sec is not None and self.rir_duration_sec <= 0:
            raise ValidationError(f"rir_duration_sec 必须为正: {self.rir_duration_sec}")
        if self.truncates_rir:
            logger.warning(
                "rir_duration_sec=%.3f 短于最大 T60 %.3f，混响尾部将被截断", self.rir_duration_sec, self.t60_range[1]
            )

    @property
    def num_channels(self) -> int:
        return self.array_ring_mics + (1 if self.array_center_mic else 0)

    @property
    def truncates_rir(self) -> bool:
        """显式 RIR 时长短于 t60_range 上限"""
        return self.rir_duration_sec is not None and self.rir_duration_sec < self.t60_range[1]

    @property
    def utterance_samples(self) -> int:
        return int(round(self.utterance_sec * self.sample_rate))

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetConfig":
        return cls(**data)


def example_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _place_sources(
    config: DatasetConfig, dims: np.ndarray, center: np.ndarray, rng: np.random.Generator
) -> List[Tuple[float, float, float]]:
    """在阵列周围水平放置声源，彼此夹角 >= min_source_angle_deg"""
    min_angle = np.deg2rad(config.min_source_angle_deg)
    placed: List[Tuple[float, float, float]] = []
    angles: List[float] = []
    for _ in range(config.num_speakers):
        for _ in range(_MAX_PLACEMENT_TRIES):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            distance = rng.uniform(*config.source_distance_range)
            height = center[2] + rng.uniform(-0.2, 0.2)
            point = np.array([center[0] + distance * np.cos(angle), center[1] + distance * np.sin(angle), height])
            inside = np.all(point > WALL_MARGIN_M) and np.all(point < dims - WALL_MARGIN_M)
            separated = all(
                abs((angle - other + np.pi) % (2.0 * np.pi) - np.pi) >= min_angle for other in angles
            )
            if inside and separated:
                placed.append(tuple(float(v) for v in point))
                angles.append(angle)
                break
        else:
            raise ValidationError(f"无法在房间 {tuple(dims)} 中放置 {config.num_speakers} 个声源")
    return placed


def _load_source(config: DatasetConfig, rng: np.random.Generator, length: int, pool: Sequence[Waveform]) -> Waveform:
    if not pool:
        return synthetic_speech(length, config.sample_rate, rng)
    wave = pool[int(rng.integers(len(pool)))]
    if wave.sample_rate != config.sample_rate:
        raise ValidationError(f"源文件采样率 {wave.sample_rate} 与配置 {config.sample_rate} 不一致")
    samples = wave.samples
    if len(samples) > length:
        start = int(rng.integers(len(samples) - length + 1))
        samples = samples[start:start + length]
    else:
        samples = np.pad(samples, (0, length - len(samples)))
    if not np.any(samples != 0):
        return synthetic_speech(length, config.sample_rate, rng)
    return Waveform(samples, config.sample_rate)


def generate_example(config: DatasetConfig, seed: int, index: int, pool: Sequence[Waveform] = ()) -> SimulatedExample:
    """生成第 index 条样本（只依赖 config、seed 与 index）"""
    rng = example_rng(seed, index)
    dims = rng.uniform(config.room_min, config.room_max)
    center = np.array([
        rng.uniform(0.4, 0.6) * dims[0],
        rng.uniform(0.4, 0.6) * dims[1],
        rng.uniform(1.0, min(1.6, dims[2] - WALL_MARGIN_M)),
    ])
    mics = circular_array(
        center, config.array_radius, config.array_ring_mics, config.array_center_mic, rotation=rng.uniform(0, np.pi)
    )
    sources_at = _place_sources(config, dims, center, rng)
    t60 = float(rng.uniform(*config.t60_range))
    snr_db = float(rng.uniform(*config.snr_range))

    utterance = config.utterance_samples
    full = config.num_speakers == 1 or rng.uniform() < config.full_overlap_ratio
    if full:
        overlap_mode, overlap_fraction, offsets = OverlapMode.FULL, 1.0, [0] * config.num_speakers
    else:
        overlap_fraction = float(rng.uniform(*config.partial_overlap_range))
        offset = int(np.clip(round((1.0 - overlap_fraction) * utterance), 1, utterance - 1))
        overlap_fraction = (utterance - offset) / utterance
        overlap_mode, offsets = OverlapMode.PARTIAL, [i * offset for i in range(config.num_speakers)]
    length = utterance + max(offsets)

    dry = []
    for offset in offsets:
        wave = _load_source(config, rng, utterance, pool)
        dry.append(Waveform(np.pad(wave.samples, (offset, length - offset - utterance)), config.sample_rate))

    room = RoomSpec(
        dimensions=tuple(float(v) for v in dims),
        t60=t60,
        mic_positions=mics,
        source_positions=sources_at,
        sample_rate=config.sample_rate,
        max_order=config.max_order,
        rir_duration_sec=config.rir_duration_sec,
        position_jitter_m=config.position_jitter_m,
    )
    rir_seed = int(rng.integers(2 ** 31))
    rirs = [image_method_rir(room, i, rng_seed=rir_seed + i) for i in range(config.num_speakers)]
    noise_seed = int(rng.integers(2 ** 31))
    example_id = f"ex{index:05d}"
    example = synthesize_mixture(
        dry, rirs, snr_db, noise_seed, config.early_boundary_ms, config.reference_channel, example_id
    )
    try:
        measured = schroeder_t60(rirs[0].taps[config.reference_channel], config.sample_rate)
    except ValidationError:
        measured = None
    example.metadata = {
        "id": example_id,
        "seed": [int(seed), int(index)],
        "t60": t60,
        "t60_measured": measured,
        "snr_db": snr_db,
        "room": list(room.dimensions),
        "mic_positions": [list(p) for p in mics],
        "source_positions": [list(p) for p in sources_at],
        "overlap": overlap_mode.value,
        "overlap_fraction": overlap_fraction,
        "length": length,
        "sample_rate": config.sample_rate,
    }
    return example


def make_dataset(config: DatasetConfig, seed: int = 0) -> List[SimulatedExample]:
    """
    生成 config.num_examples 条样本（顺序与 index 一致，结果与 workers 无关）
    """
    pool = read_mono_sources(config.source_files) if config.source_files else ()
    indices = range(config.num_examples)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            examples = list(executor.map(lambda i: generate_example(config, seed, i, pool), indices))
    else:
        examples = [generate_example(config, seed, i, pool) for i in indices]
    logger.info("数据集生成完成: %d 条样本, seed=%d", len(examples), seed)
    return examples


# -----------------------------
# 落盘 / 读取
# -----------------------------
def write_dataset(examples: Sequence[SimulatedExample], root: Union[str, Path]) -> Path:
    """写出 WAV (float32) 与 manifest.jsonl，返回清单路径"""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / MANIFEST_NAME
    with manifest.open("w", encoding="utf-8") as f:
        for example in examples:
            folder = Path(example.example_id)
            files = {
                "mixture": str(folder / "mixture.wav"),
                "sources": [str(folder / f"source{i}.wav") for i in range(example.num_speakers)],
                "early": [str(folder / f"early{i}.wav") for i in range(example.num_speakers)],
                "late": [str(folder / f"late{i}.wav") for i in range(example.num_speakers)],
                "noise": str(folder / "noise.wav"),
            }
            write_wav(root / files["mixture"], example.mixture)
            for i in range(example.num_speakers):
                write_wav(root / files["sources"][i], example.dry_sources[i])
                write_wav(root / files["early"][i], example.early_images[i])
                write_wav(root / files["late"][i], example.late_images[i])
            write_wav(root / files["noise"], example.noise)
            record = dict(example.metadata)
            record.setdefault("id", example.example_id)
            record.update({
                "snr_db": example.snr_db,
                "early_boundary_ms": example.early_boundary_ms,
                "reference_channel": example.reference_channel,
                "files": files,
            })
            f.write(json.dumps(to_jsonable(record), ensure_ascii=False) + "\n")
            log_record(logger, "dataset.example", id=example.example_id, overlap=record.get("overlap"),
                       t60=record.get("t60"), snr_db=example.snr_db)
    return manifest


def read_manifest(path: Union[str, Path]) -> List[Dict[str, Any]]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ValidationError(f"清单不存在: {path}")
    with path.open("r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_example(record: Dict[str, Any], root: Union[str, Path]) -> SimulatedExample:
    """由清单记录与 WAV 文件重建样本"""
    root = Path(root)
    files = record["files"]
    mixture = read_wav(root / files["mixture"])
    dry = tuple(read_wav(root / p).channel(0) for p in files["sources"])
    early = tuple(read_wav(root / p) for p in files["early"])
    late = tuple(read_wav(root / p) for p in files["late"])
    noise = read_wav(root / files["noise"])
    return SimulatedExample(
        example_id=record["id"],
        mixture=mixture,
        dry_sources=dry,
        early_images=early,
        late_images=late,
        noise=noise,
        snr_db=float(record["snr_db"]),
        early_boundary_ms=float(record.get("early_boundary_ms", 50.0)),
        reference_channel=int(record.get("reference_channel", 0)),
        metadata=record,
    )


def load_dataset(manifest: Union[str, Path]) -> List[SimulatedExample]:
    manifest = Path(manifest)
    root = manifest if manifest.is_dir() else manifest.parent
    return [load_example(record, root) for record in read_manifest(manifest)]

"""
指标评估

- evaluate: 按清单 id 对齐增强结果与干声源，PIT 后计算 BSS Eval SDR 与 SI-SDR
- oracle_mask_baseline: 由真实分量构造 Wiener 型掩蔽，走 MVDR(eig) 得到上界参考
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from mvdr_separation.autodiff import no_grad
from mvdr_separation.beamforming import (
    MaskSet,
    apply_beamformer,
    estimate_covariances,
    mvdr_weights,
    rtf_eigh,
)
from mvdr_separation.dsp import StftConfig, istft_array, read_wav, stft
from mvdr_separation.enums import Enhancement, MaskKind, RtfMode
from mvdr_separation.losses import best_permutation, bss_eval_sdr, si_sdr_db
from mvdr_separation.sim import SimulatedExample, read_manifest
from mvdr_separation.utils.logger import get_logger, log_data, log_record

logger = get_logger(__name__)

# BSS Eval 的滤波器长度
METRIC_TAPS = 512

Estimator = Callable[[SimulatedExample], List[np.ndarray]]


@dataclass
class UtteranceMetrics:
    """单条语音的指标（按 PIT 分配后的说话人顺序）"""
    id: str
    permutation: Tuple[int, ...]
    bss_eval_sdr_db: List[float]
    si_sdr_db: List[float]

    @property
    def mean_sdr_db(self) -> float:
        return float(np.mean(self.bss_eval_sdr_db))

    @property
    def mean_si_sdr_db(self) -> float:
        return float(np.mean(self.si_sdr_db))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "permutation": list(self.permutation),
            "bss_eval_sdr_db": list(self.bss_eval_sdr_db),
            "si_sdr_db": list(self.si_sdr_db),
        }


@dataclass
class MetricsReport:
    """
    语料级指标报告

    Attributes:
        records: 每条语音的指标
        missing: 缺少估计文件的 id
        label: 系统名称
        references: 附带的参考行（如未处理观测、早期像）
    """
    records: List[UtteranceMetrics] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)
    label: str = "system"
    references: Dict[str, "MetricsReport"] = field(default_factory=dict)

    @property
    def corpus_sdr_db(self) -> float:
        if not self.records:
            return float("nan")
        return float(np.mean([r.mean_sdr_db for r in self.records]))

    @property
    def corpus_si_sdr_db(self) -> float:
        if not self.records:
            return float("nan")
        return float(np.mean([r.mean_si_sdr_db for r in self.records]))

    def summary(self) -> Dict[str, Any]:
        rows = {self.label: (self.corpus_sdr_db, self.corpus_si_sdr_db)}
        rows.update({name: (ref.corpus_sdr_db, ref.corpus_si_sdr_db) for name, ref in self.references.items()})
        return {name: {"bss_eval_sdr_db": sdr, "si_sdr_db": si} for name, (sdr, si) in rows.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "corpus": {"bss_eval_sdr_db": self.corpus_sdr_db, "si_sdr_db": self.corpus_si_sdr_db},
            "records": [r.to_dict() for r in self.records],
            "missing": list(self.missing),
            "references": {name: ref.to_dict() for name, ref in self.references.items()},
        }

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
        return path


# -----------------------------
# 打分
# -----------------------------
def _fit_length(estimate: np.ndarray, length: int) -> np.ndarray:
    estimate = np.asarray(estimate, dtype=np.float64).reshape(-1)
    if estimate.shape[0] >= length:
        return estimate[:length]
    return np.pad(estimate, (0, length - estimate.shape[0]))


def score_estimates(
    example_id: str,
    sources: Sequence[np.ndarray],
    estimates: Sequence[np.ndarray],
    taps: int = METRIC_TAPS,
) -> UtteranceMetrics:
    """
    PIT 分配（最大化平均 BSS Eval SDR）后逐说话人计算 SDR 与 SI-SDR

    估计被截断/补零到源信号长度。
    """
    sources = [np.asarray(s, dtype=np.float64) for s in sources]
    estimates = [_fit_length(e, sources[0].shape[0]) for e in estimates]
    sdr = np.array([[bss_eval_sdr(s, e, taps) for e in estimates] for s in sources])
    perm, _ = best_permutation(-sdr)
    return UtteranceMetrics(
        id=example_id,
        permutation=tuple(perm),
        bss_eval_sdr_db=[float(sdr[i, j]) for i, j in enumerate(perm)],
        si_sdr_db=[si_sdr_db(sources[i], estimates[j]) for i, j in enumerate(perm)],
    )


def evaluate_examples(
    examples: Sequence[SimulatedExample],
    estimator: Estimator,
    label: str = "system",
    taps: int = METRIC_TAPS,
    workers: int = 1,
) -> MetricsReport:
    """对内存中的样本打分（并行时结果顺序与输入一致）"""

    def score(example: SimulatedExample) -> UtteranceMetrics:
        sources = [s.samples for s in example.dry_sources]
        return score_estimates(example.example_id, sources, estimator(example), taps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(score, examples))
    else:
        records = [score(example) for example in examples]
    return MetricsReport(records=records, label=label)


def observation_estimator(example: SimulatedExample) -> List[np.ndarray]:
    """未处理：参考通道观测复制给每个说话人"""
    y = example.mixture.channel(example.reference_channel).samples
    return [y.copy() for _ in range(example.num_speakers)]


def early_image_estimator(example: SimulatedExample) -> List[np.ndarray]:
    return [example.early_reference(i) for i in range(example.num_speakers)]


def pipeline_estimator(
    pipeline,
    rtf_mode: Union[RtfMode, str] = RtfMode.EIGH,
    enhancement: Optional[Union[Enhancement, str]] = None,
    eta_max: Optional[int] = None,
) -> Estimator:
    """把训练好的流水线包装成 Estimator（无计算图）"""

    def estimate(example: SimulatedExample) -> List[np.ndarray]:
        with no_grad():
            output = pipeline.separate(example.mixture, enhancement, rtf_mode, eta_max)
        return list(output.estimate.numpy())

    return estimate


def evaluate(
    estimates_dir: Union[str, Path],
    manifest: Union[str, Path],
    taps: int = METRIC_TAPS,
    workers: int = 1,
    label: str = "system",
) -> MetricsReport:
    """
    按 id 对齐 estimates_dir/<id>/speaker{i}.wav 与清单中的干声源

    缺少估计文件的 id 记入 report.missing 并跳过。
    """
    manifest = Path(manifest)
    root = manifest if manifest.is_dir() else manifest.parent
    estimates_dir = Path(estimates_dir)
    jobs, missing = [], []
    for record in read_manifest(manifest):
        count = len(record["files"]["sources"])
        paths = [estimates_dir / record["id"] / f"speaker{i}.wav" for i in range(count)]
        if not all(p.exists() for p in paths):
            missing.append(record["id"])
            logger.warning("缺少估计文件，跳过: %s", record["id"])
            continue
        jobs.append((record, paths))

    def score(job) -> UtteranceMetrics:
        record, paths = job
        sources = [read_wav(root / p).channel(0).samples for p in record["files"]["sources"]]
        estimates = [read_wav(p).channel(0).samples for p in paths]
        return score_estimates(record["id"], sources, estimates, taps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(score, jobs))
    else:
        records = [score(job) for job in jobs]
    for r in records:
        log_record(logger, "evaluate.utterance", **r.to_dict())
    report = MetricsReport(records=records, missing=missing, label=label)
    log_data(logger, report.summary(), title="Metrics")
    return report


# -----------------------------
# Oracle 掩蔽基线
# -----------------------------
def oracle_masks(example: SimulatedExample, stft_config: StftConfig) -> MaskSet:
    """
    Wiener 型掩蔽 |d|² / (|d|² + |y - d|²)（参考通道），m_n = m_ñ = 1 - m_d
    """
    r = example.reference_channel
    y = stft(example.mixture.channel(r), stft_config).data[:, :, 0]
    target = []
    for i in range(example.num_speakers):
        d = stft(example.early_images[i].channel(r), stft_config).data[:, :, 0]
        power = np.abs(d) ** 2
        rest = np.abs(y - d) ** 2
        total = power + rest
        target.append(np.divide(power, total, out=np.zeros_like(power), where=total > 0))
    target = np.clip(np.stack(target, axis=-1), 0.0, 1.0)  # (T, F, I)
    distortion = 1.0 - target
    return MaskSet.from_numpy(np.stack([target, distortion, distortion], axis=0))


def oracle_estimator(
    stft_config: StftConfig,
    epsilon: float = 0.01,
) -> Estimator:
    """WLM + MVDR(eig)"""

    def estimate(example: SimulatedExample) -> List[np.ndarray]:
        with no_grad():
            spec = stft(example.mixture, stft_config)
            masks = oracle_masks(example, stft_config)
            covariances = estimate_covariances(spec, masks, epsilon)
            rtf = rtf_eigh(
                covariances.get(MaskKind.TARGET), covariances.get(MaskKind.DISTORTION_RTF), example.reference_channel
            )
            weights = mvdr_weights(covariances.get(MaskKind.DISTORTION), rtf)
            estimate_spec = apply_beamformer(weights, spec).numpy()
        return list(istft_array(estimate_spec, stft_config, example.length))

    return estimate


def oracle_mask_baseline(
    examples: Union[SimulatedExample, Sequence[SimulatedExample]],
    stft_config: Optional[StftConfig] = None,
    epsilon: float = 0.01,
    taps: int = METRIC_TAPS,
    workers: int = 1,
) -> MetricsReport:
    """
    Oracle 掩蔽 + MVDR(eig) 的指标，附带两行参考：
    未处理观测 (observation) 与早期像 (early_image)
    """
    if isinstance(examples, SimulatedExample):
        examples = [examples]
    stft_config = stft_config or StftConfig()
    report = evaluate_examples(examples, oracle_estimator(stft_config, epsilon), "oracle_wlm_mvdr_eig", taps, workers)
    report.references["observation"] = evaluate_examples(examples, observation_estimator, "observation", taps, workers)
    report.references["early_image"] = evaluate_examples(examples, early_image_estimator, "early_image", taps, workers)
    log_data(logger, report.summary(), title="Oracle baseline")
    return report

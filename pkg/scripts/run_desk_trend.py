"""
桌面规模趋势检查（耗时较长，不被 pytest 收集）

1. CI-SDR 训练的系统在留出集上比未处理观测的 BSS Eval SDR 高 >= 5 dB
2. CI-SDR 训练的系统 >= 同配置 SI-SDR 训练的系统
3. Oracle 掩蔽 + MVDR(eig) 比未处理观测高 >= 8 dB，且不低于任何训练系统 3 dB 以上

用法: python scripts/run_desk_trend.py --config configs/desk.json [--steps 2000]
"""

import argparse
import json
import sys
from pathlib import Path

from mvdr_separation.enums import RtfMode
from mvdr_separation.trainer import (
    apply_overrides,
    evaluate_examples,
    heldout_examples,
    load_config,
    observation_estimator,
    oracle_mask_baseline,
    pipeline_estimator,
    train,
    SeparationPipeline,
)
from mvdr_separation.utils.logger import get_logger, log_data, setup_logging


def main() -> int:
    parser = argparse.ArgumentParser(description="桌面规模趋势检查")
    parser.add_argument("--config", type=Path, default=Path("configs/desk.json"))
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--output", type=Path, default=Path("runs/trend"))
    args = parser.parse_args()

    setup_logging()
    logger = get_logger("desk_trend")

    base = load_config(args.config)
    heldout = heldout_examples(base)
    logger.info("留出集: %d 条", len(heldout))

    results = {}
    for loss in ("ci_sdr", "si_sdr"):
        config = apply_overrides(base, steps=args.steps, loss=loss)
        data = config.to_dict()
        data["output_dir"] = str(args.output / loss)
        config = type(config).from_dict(data)
        result = train(config)
        pipeline = SeparationPipeline.from_config(config, result.params)
        report = evaluate_examples(heldout, pipeline_estimator(pipeline, RtfMode.EIGH), label=loss)
        results[loss] = report.corpus_sdr_db

    observation = evaluate_examples(heldout, observation_estimator, label="observation").corpus_sdr_db
    oracle = oracle_mask_baseline(heldout, base.stft, base.epsilon).corpus_sdr_db

    summary = {"observation": observation, "oracle": oracle, **results}
    log_data(logger, summary, title="BSS Eval SDR (dB)")
    args.output.mkdir(parents=True, exist_ok=True)
    (args.output / "trend.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    checks = {
        "ci_sdr 提升 >= 5 dB": results["ci_sdr"] - observation >= 5.0,
        "ci_sdr >= si_sdr": results["ci_sdr"] >= results["si_sdr"],
        "oracle 提升 >= 8 dB": oracle - observation >= 8.0,
        "oracle >= 训练系统 - 3 dB": all(oracle >= value - 3.0 for value in results.values()),
    }
    for name, passed in checks.items():
        (logger.info if passed else logger.error)("%s: %s", name, "通过" if passed else "未通过")
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    sys.exit(main())

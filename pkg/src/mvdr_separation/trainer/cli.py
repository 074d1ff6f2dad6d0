"""
命令行入口: mvdr-sep <subcommand>

退出码: 0 成功, 2 输入/配置错误（或评估时缺少 id）, 3 数值失败
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import List, Optional

from mvdr_separation.errors import NumericalError, SeparationError, ValidationError
from mvdr_separation.sim import load_dataset, make_dataset, write_dataset
from mvdr_separation.trainer.config import apply_overrides, load_config, parse_rtf
from mvdr_separation.trainer.diagnostics import GRAD_CHECK_TOLERANCE, composite_grad_check
from mvdr_separation.trainer.enhance import enhance, enhance_dataset
from mvdr_separation.trainer.evaluate import evaluate, oracle_mask_baseline
from mvdr_separation.trainer.train import heldout_examples, train
from mvdr_separation.utils.logger import get_logger, log_data, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON 配置文件")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--log-dir", type=Path, default=None, help="额外写入 events.jsonl 的目录")
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvdr-sep", description="掩蔽 MVDR 多说话人分离")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="生成仿真数据集")
    _add_common(p)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--num-examples", type=int, default=None)

    p = sub.add_parser("train", help="训练掩蔽估计网络")
    _add_common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--loss", choices=["ci_sdr", "si_sdr", "sdr", "f_sdr"], default=None)
    p.add_argument("--rtf", default=None, help="power:<n>")
    p.add_argument("--enhancement", choices=["mvdr", "masking"], default=None)
    p.add_argument("--dataset", type=Path, default=None, help="已生成的清单；缺省时按配置按需仿真")
    p.add_argument("--output-dir", type=Path, default=None)

    p = sub.add_parser("enhance", help="增强 WAV 或整个清单")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", type=Path)
    group.add_argument("--manifest", type=Path)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--rtf", default="eigh", help="eigh 或 power:<n>")
    p.add_argument("--enhancement", choices=["mvdr", "masking"], default=None)

    p = sub.add_parser("evaluate", help="计算 BSS Eval SDR / SI-SDR")
    _add_common(p)
    p.add_argument("--estimates", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--report", type=Path, default=None)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("oracle-baseline", help="Oracle 掩蔽 + MVDR(eig) 基线")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None, help="缺省时按配置仿真 eval_examples 条")
    p.add_argument("--report", type=Path, default=None)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("grad-check", help="端到端梯度检查（小规模）")
    _add_common(p)
    p.add_argument("--loss", choices=["ci_sdr", "si_sdr", "sdr", "f_sdr"], action="append", default=None)
    return parser


# -----------------------------
# 子命令
# -----------------------------
def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    dataset = config.dataset
    if args.num_examples is not None:
        data = dataset.to_dict()
        data["num_examples"] = args.num_examples
        dataset = type(dataset).from_dict(data)
    seed = config.seed if args.seed is None else args.seed
    manifest = write_dataset(make_dataset(dataset, seed), args.output)
    logger.info("清单已写出: %s", manifest)
    return EXIT_OK


def _cmd_train(args) -> int:
    config = apply_overrides(
        load_config(args.config),
        steps=args.steps, loss=args.loss, rtf=args.rtf, seed=args.seed, enhancement=args.enhancement,
    )
    if args.output_dir is not None:
        data = config.to_dict()
        data["output_dir"] = str(args.output_dir)
        config = type(config).from_dict(data)
    examples = load_dataset(args.dataset) if args.dataset is not None else None
    result = train(config, examples)
    log_data(logger, {"checkpoint": str(result.checkpoint), "steps": len(result.log)}, title="Train")
    return EXIT_OK


def _cmd_enhance(args) -> int:
    mode, eta_max = parse_rtf(args.rtf)
    if args.manifest is not None:
        enhance_dataset(args.checkpoint, args.manifest, args.output, mode, args.enhancement, eta_max)
    else:
        enhance(args.checkpoint, args.input, mode, args.output, args.enhancement, eta_max)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    report = evaluate(args.estimates, args.manifest, workers=args.workers)
    if args.report is not None:
        report.write(args.report)
    if report.missing:
        logger.error("缺少 %d 条估计: %s", len(report.missing), ", ".join(report.missing))
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_oracle(args) -> int:
    config = load_config(args.config)
    if args.manifest is not None:
        examples = load_dataset(args.manifest)
    else:
        examples = heldout_examples(config)
    report = oracle_mask_baseline(examples, config.stft, config.epsilon, workers=args.workers)
    if args.report is not None:
        report.write(args.report)
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    results = composite_grad_check(args.loss, seed=0 if args.seed is None else args.seed)
    log_data(logger, results, title="Grad check")
    if any(error >= GRAD_CHECK_TOLERANCE for error in results.values()):
        logger.error("梯度检查未通过 (阈值 %g)", GRAD_CHECK_TOLERANCE)
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "evaluate": _cmd_evaluate,
    "oracle-baseline": _cmd_oracle,
    "grad-check": _cmd_grad_check,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    root = setup_logging(level=logging.DEBUG if args.verbose else logging.INFO, log_dir=args.log_dir)
    if args.verbose:
        # 模块导入时已按 INFO 配置过
        root.setLevel(logging.DEBUG)
        for handler in root.handlers:
            handler.setLevel(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        logger.error("输入错误: %s", e)
        return EXIT_VALIDATION
    except NumericalError as e:
        logger.error("数值失败: %s", e)
        return EXIT_NUMERICAL
    except SeparationError as e:
        logger.error("失败: %s", e)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())

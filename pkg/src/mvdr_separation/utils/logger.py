from pathlib import Path
import json
import logging
from logging.handlers import RotatingFileHandler
import threading
import time
from typing import Any, Dict, Optional

import numpy as np

_config_lock = threading.Lock()
_configured = False
_jsonl_paths: Dict[str, RotatingFileHandler] = {}

# 自定义日志级别 DATA (在 INFO 和 WARNING 之间)，用于结构化记录
DATA_LEVEL = 25
logging.addLevelName(DATA_LEVEL, "DATA")

# ANSI 颜色代码
class Colors:
    """ANSI 颜色代码"""
    RESET = '\033[0m'
    RED = '\033[31m'
    YELLOW = '\033[33m'
    WHITE = '\033[37m'
    CYAN = '\033[36m'
    GREEN = '\033[32m'


class ColoredFormatter(logging.Formatter):
    """带颜色的日志格式化器（仅用于控制台输出）"""

    LEVEL_COLORS = {
        logging.DEBUG: Colors.CYAN,
        logging.INFO: Colors.WHITE,
        DATA_LEVEL: Colors.GREEN,
        logging.WARNING: Colors.YELLOW,
        logging.ERROR: Colors.RED,
        logging.CRITICAL: Colors.RED,
    }

    def format(self, record: logging.LogRecord) -> str:
        log_message = super().format(record)
        color = self.LEVEL_COLORS.get(record.levelno, Colors.WHITE)
        return f"{color}{log_message}{Colors.RESET}"


class JsonLinesFormatter(logging.Formatter):
    """
    每条日志输出为一行 JSON

    结构化记录 (log_record) 的字段放在 record.fields 中，会被展开到顶层；
    普通日志只包含 message。
    """

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "time": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(record.created)),
            "level": record.levelname,
            "logger": record.name,
        }
        fields = getattr(record, "fields", None)
        if fields is not None:
            payload["event"] = getattr(record, "event", record.getMessage())
            payload.update(to_jsonable(fields))
        else:
            payload["message"] = record.getMessage()
        return json.dumps(payload, ensure_ascii=False, sort_keys=False)


def to_jsonable(data: Any) -> Any:
    """把 numpy 标量/数组、tuple、Path 等转换为可 JSON 序列化的对象"""
    if isinstance(data, dict):
        return {str(k): to_jsonable(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_jsonable(v) for v in data]
    if isinstance(data, np.ndarray):
        return data.tolist()
    if isinstance(data, np.generic):
        return data.item()
    if isinstance(data, Path):
        return str(data)
    return data


def _is_scalar(value: Any) -> bool:
    return isinstance(value, (int, float, bool, str, complex, type(None), np.generic))


def format_data(data: Any, indent: int = 2, max_depth: int = 10, current_depth: int = 0) -> str:
    """
    把配置、指标、训练记录等嵌套结构排成多行文本

    标量短列表（如每个说话人的 SDR）排成一行；numpy 数组只显示形状与类型；
    浮点统一保留 6 位有效数字。
    """
    if current_depth >= max_depth:
        return "..."
    pad = " " * (indent * (current_depth + 1))
    close_pad = " " * (indent * current_depth)
    nested = current_depth + 1

    if isinstance(data, dict):
        if not data:
            return "{}"
        body = [f"{pad}{key}: {format_data(value, indent, max_depth, nested)}" for key, value in data.items()]
        return "{\n" + "\n".join(body) + f"\n{close_pad}}}"

    if isinstance(data, (list, tuple)):
        if len(data) <= 8 and all(_is_scalar(item) for item in data):
            return "[" + ", ".join(format_data(item, indent, max_depth, nested) for item in data) + "]"
        body = [f"{pad}{format_data(item, indent, max_depth, nested)}," for item in data]
        return "[\n" + "\n".join(body) + f"\n{close_pad}]"

    if isinstance(data, np.ndarray):
        return f"<array {data.dtype} {tuple(data.shape)}>"
    if isinstance(data, np.generic):
        return format_data(data.item(), indent, max_depth, current_depth)
    if isinstance(data, bool) or data is None:
        return str(data)
    if isinstance(data, float):
        return f"{data:.6g}"
    if isinstance(data, complex):
        return f"{data.real:.4g}{data.imag:+.4g}j"
    if isinstance(data, str):
        return data if len(data) <= 120 else f"{data[:120]}... ({len(data)} 字符)"
    text = repr(data)
    return text if len(text) <= 200 else f"{text[:200]}... ({type(data).__name__})"


def setup_logging(level=logging.INFO, log_dir: Optional[Path] = None, enable_colors: bool = True):
    """
    配置根日志记录器（仅配置一次）

    Args:
        level: 日志级别
        log_dir: 如果给出，则在该目录下额外写入 JSON 行日志 (events.jsonl)
        enable_colors: 是否启用控制台颜色输出

    Returns:
        配置好的根日志记录器
    """
    global _configured
    with _config_lock:
        logger = logging.getLogger()
        if _configured:
            if log_dir is not None:
                _attach_jsonl(Path(log_dir) / "events.jsonl")
            return logger

        logger.setLevel(level)

        ch = logging.StreamHandler()
        ch.setLevel(level)
        fmt = "%(asctime)s %(levelname)-8s [%(name)s] %(message)s"
        if enable_colors:
            ch.setFormatter(ColoredFormatter(fmt, "%Y-%m-%d %H:%M:%S"))
        else:
            ch.setFormatter(logging.Formatter(fmt, "%Y-%m-%d %H:%M:%S"))
        logger.addHandler(ch)

        for noisy in ("gradio", "httpx"):
            logging.getLogger(noisy).setLevel(logging.WARNING)

        if log_dir is not None:
            _attach_jsonl(Path(log_dir) / "events.jsonl")

        _configured = True
        logger.debug("Logging configured, level=%s, log_dir=%s, colors=%s", level, log_dir, enable_colors)
        return logger


def _attach_jsonl(path: Path) -> RotatingFileHandler:
    key = str(path.resolve())
    if key in _jsonl_paths:
        return _jsonl_paths[key]
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = RotatingFileHandler(path, maxBytes=50 * 1024 * 1024, backupCount=3, encoding="utf-8")
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(JsonLinesFormatter())
    logging.getLogger().addHandler(handler)
    _jsonl_paths[key] = handler
    return handler


def add_jsonl_handler(path: Path) -> RotatingFileHandler:
    """在根日志记录器上挂载一个 JSON 行文件处理器（同一路径只挂载一次）"""
    setup_logging()
    with _config_lock:
        return _attach_jsonl(Path(path))


def remove_jsonl_handler(path: Path) -> None:
    """卸载 add_jsonl_handler 挂载的处理器并关闭文件"""
    with _config_lock:
        handler = _jsonl_paths.pop(str(Path(path).resolve()), None)
    if handler is not None:
        logging.getLogger().removeHandler(handler)
        handler.close()


def get_logger(name: str = None):
    """
    获取配置好的日志记录器

    Args:
        name: 日志记录器名称，如果为 None 则返回根日志记录器

    Returns:
        配置好的日志记录器
    """
    setup_logging()
    return logging.getLogger(name)


def describe(data: Any) -> str:
    """一行描述：类型加上长度、键或形状"""
    name = type(data).__name__
    if isinstance(data, dict):
        keys = list(data)
        shown = ", ".join(map(str, keys[:5])) + (" ..." if len(keys) > 5 else "")
        return f"{name}[{len(keys)}] {{{shown}}}"
    if isinstance(data, np.ndarray):
        return f"{name} {data.dtype} {tuple(data.shape)}"
    if isinstance(data, (list, tuple, str)):
        return f"{name}[{len(data)}]"
    return name


def log_data(logger: logging.Logger, data: Any, title: str = "Data"):
    """
    记录数据结构（Dict/List）的格式化输出，使用 DATA 级别

    Example:
        >>> logger = get_logger()
        >>> log_data(logger, {"sdr_db": 12.3, "perm": [1, 0]}, title="Metrics")
    """
    try:
        type_info = describe(data)
        formatted = format_data(data)
        logger.log(DATA_LEVEL, f"{title} | {type_info}\n{formatted}")
    except Exception as e:
        logger.exception("Failed to log data: %s", e)


def log_record(logger: logging.Logger, event: str, **fields: Any) -> Dict[str, Any]:
    """
    记录一条结构化事件 (DATA 级别)

    控制台显示格式化后的字段；JSON 行文件处理器把 fields 展开写成一行 JSON。

    Returns:
        记录的字段（已转换为 JSON 友好的类型），便于调用方同时保存在内存中
    """
    clean = to_jsonable(fields)
    logger.log(
        DATA_LEVEL,
        "%s %s",
        event,
        format_data(clean) if len(clean) > 4 else json.dumps(clean, ensure_ascii=False),
        extra={"fields": clean, "event": event},
    )
    return clean


def log_array_summary(logger: logging.Logger, name: str, array: np.ndarray):
    """以 DEBUG 级别记录数组摘要：形状、类型、最小/最大/均值"""
    try:
        arr = np.asarray(array)
        if np.iscomplexobj(arr):
            arr = np.abs(arr)
        if arr.size:
            logger.debug(
                "[%s] array summary: shape=%s dtype=%s min=%.4g max=%.4g mean=%.4g",
                name, arr.shape, arr.dtype, float(arr.min()), float(arr.max()), float(arr.mean()),
            )
        else:
            logger.debug("[%s] array summary: empty shape=%s", name, arr.shape)
    except Exception as e:
        logger.exception("Failed to summarize array %s: %s", name, e)

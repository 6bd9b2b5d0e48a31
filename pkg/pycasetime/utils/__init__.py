"""
pycasetime 工具函数

CLI 与 CaseTimeStudy 共用的输出写入器。所有表格按 RFC 4180 风格写出 CSV，
浮点数格式固定，保证重复运行的输出逐字节一致。
"""
import json
import logging
from pathlib import Path
from typing import Any, Union

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6f"


def ensure_dir(path: Union[str, Path]) -> Path:
    """创建目录（含父目录）并返回 Path"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(frame: pd.DataFrame, path: Union[str, Path], float_format: str = FLOAT_FORMAT) -> Path:
    """
    写出 DataFrame 为 CSV（不含索引，换行符固定为 \\n）

    Args:
        frame: 表格
        path: 目标文件，父目录不存在时自动创建
        float_format: 浮点格式

    Returns:
        写出的路径
    """
    path = Path(path)
    ensure_dir(path.parent)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path


def write_json(document: Any, path: Union[str, Path]) -> Path:
    """写出 JSON 文档（UTF-8，缩进 2，拒绝 NaN）"""
    path = Path(path)
    ensure_dir(path.parent)
    text = json.dumps(document, indent=2, ensure_ascii=False, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


__all__ = ["FLOAT_FORMAT", "ensure_dir", "write_csv", "write_json"]

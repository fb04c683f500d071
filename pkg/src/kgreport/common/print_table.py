# 名称: print_table.py
# 说明: 按终端显示宽度对齐 DataFrame（wcwidth），用于消融表与图统计输出

from typing import List, Sequence

import pandas as pd
from wcwidth import wcswidth


def display_width(s: str) -> int:
    """终端显示宽度；含不可打印字符时退回 len"""
    w = wcswidth(s)
    return len(s) if w < 0 else w


def pad(s: str, width: int, right: bool = False) -> str:
    gap = max(0, width - display_width(s))
    return " " * gap + s if right else s + " " * gap


def format_cell(value, float_digits: int = 4) -> str:
    if isinstance(value, float):
        return f"{value:.{float_digits}f}"
    return "" if value is None else str(value)


def format_frame(df: pd.DataFrame, float_digits: int = 4) -> List[str]:
    """把 DataFrame 格式化为对齐的文本行（表头 + 分隔线 + 数据行）

    首列左对齐，其余列右对齐。

    Args:
        df: 待打印表格
        float_digits: 浮点数保留位数

    Returns:
        文本行列表
    """
    header = [str(c) for c in df.columns]
    rows: List[Sequence[str]] = [
        [format_cell(v, float_digits) for v in rec] for rec in df.itertuples(index=False)
    ]
    widths = [max(display_width(r[i]) for r in [header] + rows) for i in range(len(header))]

    def line(cells: Sequence[str]) -> str:
        return " ".join(pad(c, w, right=i > 0) for i, (c, w) in enumerate(zip(cells, widths)))

    lines = [line(header), "-" * (sum(widths) + len(widths) - 1)]
    lines.extend(line(r) for r in rows)
    return lines

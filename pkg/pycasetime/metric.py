"""
运营准确率指标

预测 Y_hat 被认为准确，当且仅当 |Y - Y_hat| < tau(Y_hat)，其中
    tau(Y_hat) = min(max(p * Y_hat, m), M)
等号（|Y - Y_hat| == tau）计为不准确。
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainViolation, EmptyInput

DEFAULT_P = 0.2
DEFAULT_M = 15.0
DEFAULT_CAP = 60.0

# 默认 p 网格: 0.05, 0.10, ..., 0.50
DEFAULT_P_GRID: Tuple[float, ...] = tuple(round(0.05 * i, 10) for i in range(1, 11))


@dataclass(frozen=True)
class MetricParams:
    """
    指标参数 (p, m, M)

    Args:
        p: 相对容差比例，0 < p < 1
        m: 容差下限（分钟），>= 0
        M: 容差上限（分钟），> m
    """

    p: float = DEFAULT_P
    m: float = DEFAULT_M
    M: float = DEFAULT_CAP

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise DomainViolation(f"p must lie in (0, 1), got {self.p}")
        if not (0 <= self.m < self.M):
            raise DomainViolation(f"need M > m >= 0, got m={self.m}, M={self.M}")


@dataclass(frozen=True)
class PredictionPair:
    """一次预测：实际时长、预测时长（分钟）以及手术名称"""

    actual: float
    predicted: float
    procedure_name: str = ""

    def __post_init__(self):
        if not (self.actual > 0 and self.predicted > 0):
            raise DomainViolation(
                f"prediction pair needs positive durations, got ({self.actual}, {self.predicted})"
            )


def tolerance(y_hat: float, params: MetricParams = MetricParams()) -> float:
    """
    计算容差 tau(y_hat) = min(max(p * y_hat, m), M)

    Raises:
        DomainViolation: y_hat <= 0
    """
    if not y_hat > 0:
        raise DomainViolation(f"prediction must be positive, got {y_hat}")
    return min(max(params.p * y_hat, params.m), params.M)


def loss(y: float, y_hat: float, params: MetricParams = MetricParams()) -> int:
    """
    二值损失: |y - y_hat| >= tau(y_hat) 时为 1，否则为 0

    Raises:
        DomainViolation: 非正输入
    """
    if not y > 0:
        raise DomainViolation(f"actual duration must be positive, got {y}")
    return 0 if abs(y - y_hat) < tolerance(y_hat, params) else 1


def loss_array(y: np.ndarray, y_hat: np.ndarray, params: MetricParams = MetricParams()) -> np.ndarray:
    """loss 的向量化版本，返回 0/1 整数数组"""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if np.any(y <= 0) or np.any(y_hat <= 0):
        raise DomainViolation("loss requires positive durations")
    tau = np.minimum(np.maximum(params.p * y_hat, params.m), params.M)
    return (np.abs(y - y_hat) >= tau).astype(int)


def _pair_arrays(pairs: Sequence[PredictionPair]) -> Tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        raise EmptyInput("accuracy needs at least one prediction pair")
    actual = np.fromiter((pair.actual for pair in pairs), dtype=float, count=len(pairs))
    predicted = np.fromiter((pair.predicted for pair in pairs), dtype=float, count=len(pairs))
    return actual, predicted


def accuracy(pairs: Sequence[PredictionPair], params: MetricParams = MetricParams()) -> float:
    """
    平均预测准确率 (1/N) * sum(1 - loss)

    Raises:
        EmptyInput: pairs 为空
    """
    actual, predicted = _pair_arrays(pairs)
    losses = loss_array(actual, predicted, params)
    return float(np.count_nonzero(losses == 0)) / len(losses)


def average_error(pairs: Sequence[PredictionPair], params: MetricParams = MetricParams()) -> float:
    """平均预测误差，恒等于 1 - accuracy"""
    return 1.0 - accuracy(pairs, params)


def epsilon_bound(p: float) -> float:
    """
    对数空间的准确半宽 eps(p) = min(-ln(1 - p), ln(1 + p))

    当容差没有被 M 截断时，(ln y - ln y_hat)^2 < eps(p)^2 蕴含 loss = 0。
    对 (0, 1) 内的 p 恒等于 ln(1 + p)。

    Raises:
        DomainViolation: p 不在 (0, 1) 内
    """
    if not 0 < p < 1:
        raise DomainViolation(f"p must lie in (0, 1), got {p}")
    return min(-math.log1p(-p), math.log1p(p))


def sweep_p(
    pairs: Sequence[PredictionPair],
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    m: float = DEFAULT_M,
    M: float = DEFAULT_CAP,
) -> List[Tuple[float, float]]:
    """
    固定 m, M 扫描 p，返回按 p 升序排列的 (p, accuracy)

    Raises:
        EmptyInput: pairs 为空
    """
    actual, predicted = _pair_arrays(pairs)
    curve = []
    for p in sorted(p_grid):
        params = MetricParams(p, m, M)
        losses = loss_array(actual, predicted, params)
        curve.append((float(p), float(np.count_nonzero(losses == 0)) / len(losses)))
    return curve


def sweep_methods(
    pairs_by_method: Mapping[str, Sequence[PredictionPair]],
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    m: float = DEFAULT_M,
    M: float = DEFAULT_CAP,
) -> Dict[str, List[Tuple[float, float]]]:
    """对每个方法分别做 sweep_p"""
    return {method: sweep_p(pairs, p_grid, m, M) for method, pairs in pairs_by_method.items()}


def tau_curve(
    params: MetricParams = MetricParams(),
    y_hat_max: float = 400.0,
    n_points: int = 400,
    y_hat_min: Optional[float] = None,
) -> List[Tuple[float, float]]:
    """tau(y_hat) 曲线采样点，供绘图使用"""
    start = y_hat_min if y_hat_min is not None else y_hat_max / n_points
    grid = np.linspace(start, y_hat_max, n_points)
    return [(float(y), tolerance(float(y), params)) for y in grid]

"""
评估: 重复分层 k 折交叉验证、准确率汇总、重要性平均与描述统计

交叉验证的每个 repeat x fold 单元格相互独立，可以并行；
汇总时按 (repeat, fold) 顺序归约，结果与完成顺序无关。
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from .data_model import Dataset, build_schema
from .errors import (
    CaseTimeError,
    DegenerateInput,
    DomainViolation,
    EmptyInput,
    ModelFitError,
    StratumTooSmall,
)
from .metric import DEFAULT_P_GRID, MetricParams, PredictionPair, loss_array, sweep_methods
from .predictors import Hyperparams, MethodId, fit

logger = logging.getLogger(__name__)

OVERALL = "Overall"

REPORT_FORMAT = "pycasetime-report"
REPORT_FORMAT_VERSION = 1


# ==================== 折划分 ====================

@dataclass(frozen=True, eq=False)
class FoldPlan:
    """
    重复 k 折划分

    fold_of[r][i] 是第 r 次重复中数据集第 i 个病例所在的测试折。
    """

    repeats: int
    k: int
    seed: int
    stratify: bool
    case_ids: Tuple[str, ...]
    fold_of: Tuple[np.ndarray, ...]

    @property
    def assignment(self) -> List[Dict[str, int]]:
        """每次重复的 case_id -> 折号 映射"""
        return [
            {case_id: int(fold) for case_id, fold in zip(self.case_ids, folds)}
            for folds in self.fold_of
        ]

    def test_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of[repeat] == fold)

    def train_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of[repeat] != fold)

    def cells(self) -> List[Tuple[int, int]]:
        return [(r, f) for r in range(self.repeats) for f in range(self.k)]

    def same_as(self, other: "FoldPlan") -> bool:
        return self.case_ids == other.case_ids and all(
            np.array_equal(a, b) for a, b in zip(self.fold_of, other.fold_of)
        )


def make_folds(
    ds: Dataset,
    repeats: int = 5,
    k: int = 5,
    seed: int = 0,
    stratify: bool = True,
) -> FoldPlan:
    """
    生成重复 k 折划分

    分层模式下，每次重复按手术名称字母序遍历各分层，层内随机打乱后
    轮转发牌到 k 个折，发牌位置在分层之间连续累加，使总体折大小也只差 1。

    Args:
        ds: 数据集
        repeats: 重复次数
        k: 折数
        seed: 随机种子，第 r 次重复使用由 (seed, r) 派生的随机源
        stratify: 是否按手术名称分层

    Returns:
        FoldPlan

    Raises:
        StratumTooSmall: 某个分层（或非分层时整个数据集）的病例数少于 k
    """
    if repeats < 1:
        raise DomainViolation(f"repeats must be >= 1, got {repeats}")
    if k < 2:
        raise DomainViolation(f"k must be >= 2, got {k}")

    procs = np.array([case.procedure_name for case in ds], dtype=object)
    strata: List[Tuple[str, np.ndarray]] = []
    if stratify:
        for name in ds.procedures:
            members = np.flatnonzero(procs == name)
            if len(members) < k:
                raise StratumTooSmall(name, len(members), k)
            strata.append((name, members))
    else:
        if len(ds) < k:
            raise StratumTooSmall(OVERALL, len(ds), k)
        strata.append((OVERALL, np.arange(len(ds))))

    fold_of = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        folds = np.empty(len(ds), dtype=int)
        offset = 0
        for _, members in strata:
            shuffled = rng.permutation(members)
            folds[shuffled] = (offset + np.arange(len(shuffled))) % k
            offset = (offset + len(shuffled)) % k
        fold_of.append(folds)

    return FoldPlan(
        repeats=repeats,
        k=k,
        seed=seed,
        stratify=stratify,
        case_ids=tuple(case.case_id for case in ds),
        fold_of=tuple(fold_of),
    )


# ==================== 报告类型 ====================

@dataclass(frozen=True)
class AccuracyStat:
    """
    某方法在某手术（或 Overall）上的准确率

    se 为各单元格准确率的样本标准差（ddof=1），另外给出两种备选估计:
    se_sqrt_cells = se / sqrt(n_cells)，se_repeat_means = 各次重复均值的样本标准差。
    样本不足以估计时为 nan。
    """

    mean: float
    se: float
    se_sqrt_cells: float
    se_repeat_means: float
    n_cells: int

    @property
    def error(self) -> float:
        return 1.0 - self.mean


@dataclass(frozen=True)
class ProcedureSummary:
    """样本量、平均时长与样本标准差（分钟）；单例分层的 sd 记为 0 且 degenerate 为 True"""

    n: int
    mean: float
    sd: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """cross_validate 的结果"""

    methods: Tuple[MethodId, ...]
    procedures: Tuple[str, ...]
    metric: MetricParams
    repeats: int
    k: int
    seed: int
    stratify: bool
    accuracy: Dict[Tuple[MethodId, str], AccuracyStat]
    summary: Dict[str, ProcedureSummary]
    importance: Dict[MethodId, Dict[str, float]]
    grouped_importance: Dict[MethodId, Dict[str, float]]
    cell_accuracy: Dict[Tuple[MethodId, str], Tuple[float, ...]] = field(repr=False)
    oof_pairs: Dict[MethodId, Tuple[PredictionPair, ...]] = field(repr=False)

    @property
    def groups(self) -> Tuple[str, ...]:
        """Overall 在前，其后为各手术"""
        return (OVERALL,) + self.procedures

    def stat(self, method: MethodId, procedure: str = OVERALL) -> AccuracyStat:
        return self.accuracy[(method, procedure)]

    def ranking(self) -> List[MethodId]:
        """按总体平均准确率升序排列的方法（并列时保持输入顺序）"""
        return sorted(self.methods, key=lambda m: self.stat(m).mean)

    def ranking_chain(self) -> str:
        return " ≺ ".join(method.label for method in self.ranking())

    def win_count(self, baseline: MethodId, challenger: MethodId) -> int:
        """challenger 的平均准确率严格高于 baseline 的手术数"""
        return sum(
            1
            for name in self.procedures
            if self.stat(challenger, name).mean > self.stat(baseline, name).mean
        )

    def win_counts(self) -> Dict[str, Dict[str, int]]:
        """所有有序方法对的胜出手术数: {baseline: {challenger: n}}"""
        return {
            baseline.label: {
                challenger.label: self.win_count(baseline, challenger)
                for challenger in self.methods
                if challenger is not baseline
            }
            for baseline in self.methods
        }

    def wins_frame(self) -> pd.DataFrame:
        """胜出计数矩阵: 每个 baseline 一行，列为 challenger，对角线为 0"""
        rows = []
        for baseline in self.methods:
            row = {"baseline": baseline.label}
            for challenger in self.methods:
                row[challenger.label] = self.win_count(baseline, challenger)
            rows.append(row)
        return pd.DataFrame(rows)

    def sweep(self, p_grid: Sequence[float] = DEFAULT_P_GRID) -> pd.DataFrame:
        """
        用保留的折外预测对扫描 p（m, M 取报告的指标参数）

        Returns:
            列为 p 与各方法标签的 DataFrame，按 p 升序
        """
        curves = sweep_methods(
            {method.label: self.oof_pairs[method] for method in self.methods},
            p_grid,
            self.metric.m,
            self.metric.M,
        )
        frame = pd.DataFrame({"p": [p for p, _ in next(iter(curves.values()))]})
        for label, curve in curves.items():
            frame[label] = [acc for _, acc in curve]
        return frame

    def accuracy_frame(self) -> pd.DataFrame:
        """结果表布局: 每个手术一行，N / 均值 / 标准差后接各方法的准确率与标准误"""
        rows = []
        for name in self.groups:
            summary = self.summary[name]
            row = {"procedure": name, "N": summary.n, "mean_min": summary.mean, "sd_min": summary.sd}
            for method in self.methods:
                stat = self.stat(method, name)
                row[method.label] = stat.mean
                row[f"{method.label} SE"] = stat.se
            rows.append(row)
        return pd.DataFrame(rows)

    def importance_frame(self, grouped: bool = True) -> pd.DataFrame:
        """
        重要性表: 行为原始特征（grouped=True）或编码列，列为各学习方法

        某方法没有某特征（例如非 -SCH 方法的专家预测）时填 0。
        """
        source = self.grouped_importance if grouped else self.importance
        learned = [method for method in self.methods if method in source]
        names: List[str] = []
        for method in learned:
            names += [name for name in source[method] if name not in names]
        frame = pd.DataFrame({"feature": names})
        for method in learned:
            frame[method.label] = [source[method].get(name, 0.0) for name in names]
        return frame

    def to_dict(self) -> Dict:
        """JSON 结构见 REPORT_FORMAT.md"""
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_FORMAT_VERSION,
            "metric": {"p": self.metric.p, "m": self.metric.m, "M": self.metric.M},
            "cv": {"repeats": self.repeats, "k": self.k, "seed": self.seed, "stratify": self.stratify},
            "methods": [method.label for method in self.methods],
            "procedures": list(self.procedures),
            "summary": [
                {
                    "procedure": name,
                    "n": self.summary[name].n,
                    "mean_min": self.summary[name].mean,
                    "sd_min": self.summary[name].sd,
                    "sd_degenerate": self.summary[name].degenerate,
                }
                for name in self.groups
            ],
            "accuracy": [
                {
                    "method": method.label,
                    "procedure": name,
                    "mean": stat.mean,
                    "error": stat.error,
                    "se": _finite_or_none(stat.se),
                    "se_sqrt_cells": _finite_or_none(stat.se_sqrt_cells),
                    "se_repeat_means": _finite_or_none(stat.se_repeat_means),
                    "n_cells": stat.n_cells,
                }
                for method in self.methods
                for name in self.groups
                for stat in (self.stat(method, name),)
            ],
            "importance": {
                method.label: {
                    "features": self.importance[method],
                    "groups": self.grouped_importance[method],
                }
                for method in self.methods
                if method in self.importance
            },
            "ranking": [method.label for method in self.ranking()],
            "ranking_chain": self.ranking_chain(),
            "win_counts": self.win_counts(),
        }


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


# ==================== 交叉验证 ====================

@dataclass
class _CellResult:
    repeat: int
    fold: int
    test_idx: np.ndarray
    predictions: Dict[MethodId, np.ndarray]
    importance: Dict[MethodId, Dict[str, float]]


def cell_seed(seed: int, repeat: int, fold: int) -> int:
    """由 (seed, repeat, fold) 派生单元格内模型的随机种子"""
    return int(np.random.SeedSequence([seed, repeat, fold]).generate_state(1)[0])


def _run_cell(
    ds: Dataset,
    methods: Sequence[MethodId],
    plan: FoldPlan,
    repeat: int,
    fold: int,
    hyperparams: Hyperparams,
) -> _CellResult:
    test_idx = plan.test_indices(repeat, fold)
    train = ds.subset(plan.train_indices(repeat, fold))
    test_cases = [ds[i] for i in test_idx]
    seed = cell_seed(plan.seed, repeat, fold)

    predictions: Dict[MethodId, np.ndarray] = {}
    importance: Dict[MethodId, Dict[str, float]] = {}
    for method in methods:
        try:
            predictor = fit(method, train, hyperparams, seed=seed)
            predictions[method] = predictor.predict_many(test_cases)
        except CaseTimeError as e:
            raise ModelFitError(repeat, fold, method.label, e) from e
        named = predictor.named_importance()
        if named is not None:
            importance[method] = named
    logger.info("cell repeat=%d fold=%d done (%d test cases)", repeat, fold, len(test_idx))
    return _CellResult(repeat, fold, test_idx, predictions, importance)


def _sample_sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return float("nan")
    return float(np.std(values, ddof=1))


def _accuracy_stat(cells: Sequence[Tuple[int, float]]) -> AccuracyStat:
    values = [acc for _, acc in cells]
    by_repeat: Dict[int, List[float]] = defaultdict(list)
    for repeat, acc in cells:
        by_repeat[repeat].append(acc)
    repeat_means = [float(np.mean(by_repeat[r])) for r in sorted(by_repeat)]
    se = _sample_sd(values)
    return AccuracyStat(
        mean=float(np.mean(values)),
        se=se,
        se_sqrt_cells=se / math.sqrt(len(values)),
        se_repeat_means=_sample_sd(repeat_means),
        n_cells=len(values),
    )


def _average_importance(
    per_cell: Sequence[Mapping[str, float]],
    names: Sequence[str],
) -> Dict[str, float]:
    totals = np.zeros(len(names), dtype=float)
    for scores in per_cell:
        totals += [scores.get(name, 0.0) for name in names]
    totals /= max(len(per_cell), 1)
    total = totals.sum()
    if total > 0:
        totals /= total
    return {name: float(score) for name, score in zip(names, totals)}


def cross_validate(
    ds: Dataset,
    methods: Sequence[MethodId],
    plan: FoldPlan,
    metric: MetricParams = MetricParams(),
    hyperparams: Hyperparams = Hyperparams(),
    n_jobs: int = 1,
) -> EvaluationReport:
    """
    在 FoldPlan 的每个单元格上拟合并评估所有方法

    Args:
        ds: 数据集（必须是构建 plan 的那个）
        methods: 参评方法
        plan: make_folds 的结果
        metric: 指标参数
        hyperparams: 学习方法的超参数
        n_jobs: joblib 并行度，1 表示串行，-1 表示全部核

    Returns:
        EvaluationReport

    Raises:
        ModelFitError: 某单元格拟合或预测失败
    """
    if plan.case_ids != tuple(case.case_id for case in ds):
        raise DomainViolation("fold plan was built on a different dataset")
    if not methods:
        raise EmptyInput("cross_validate needs at least one method")
    methods = tuple(dict.fromkeys(methods))

    cells: List[_CellResult] = Parallel(n_jobs=n_jobs)(
        delayed(_run_cell)(ds, methods, plan, r, f, hyperparams) for r, f in plan.cells()
    )
    cells.sort(key=lambda cell: (cell.repeat, cell.fold))

    actual = ds.durations()
    procs = np.array([case.procedure_name for case in ds], dtype=object)
    procedures = tuple(ds.procedures)

    cell_values: Dict[Tuple[MethodId, str], List[Tuple[int, float]]] = defaultdict(list)
    oof: Dict[MethodId, List[PredictionPair]] = {method: [] for method in methods}
    importance_cells: Dict[MethodId, List[Dict[str, float]]] = defaultdict(list)

    for cell in cells:
        cell_procs = procs[cell.test_idx]
        cell_actual = actual[cell.test_idx]
        for method in methods:
            predicted = cell.predictions[method]
            correct = loss_array(cell_actual, predicted, metric) == 0
            cell_values[(method, OVERALL)].append((cell.repeat, float(np.mean(correct))))
            for name in np.unique(cell_procs):
                mask = cell_procs == name
                cell_values[(method, name)].append((cell.repeat, float(np.mean(correct[mask]))))
            oof[method].extend(
                PredictionPair(float(y), float(y_hat), str(name))
                for y, y_hat, name in zip(cell_actual, predicted, cell_procs)
            )
            if method in cell.importance:
                importance_cells[method].append(cell.importance[method])

    accuracy = {key: _accuracy_stat(values) for key, values in cell_values.items()}

    importance: Dict[MethodId, Dict[str, float]] = {}
    grouped: Dict[MethodId, Dict[str, float]] = {}
    for method, per_cell in importance_cells.items():
        schema = build_schema(ds, include_expert=method.uses_expert)
        importance[method] = _average_importance(per_cell, schema.feature_names)
        group_scores: Dict[str, float] = {}
        for name, group in zip(schema.feature_names, schema.feature_groups):
            group_scores[group] = group_scores.get(group, 0.0) + importance[method][name]
        grouped[method] = group_scores

    report = EvaluationReport(
        methods=methods,
        procedures=procedures,
        metric=metric,
        repeats=plan.repeats,
        k=plan.k,
        seed=plan.seed,
        stratify=plan.stratify,
        accuracy=accuracy,
        summary=summarize(ds),
        importance=importance,
        grouped_importance=grouped,
        cell_accuracy={key: tuple(acc for _, acc in values) for key, values in cell_values.items()},
        oof_pairs={method: tuple(pairs) for method, pairs in oof.items()},
    )
    logger.info("cross-validation finished: %s", report.ranking_chain())
    return report


# ==================== 描述统计 ====================

def _paired_arrays(xs: Sequence[float], ys: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput(f"need two equal-length sequences, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise DegenerateInput("need at least two points")
    if np.ptp(x) == 0:
        raise DegenerateInput("xs has zero variance")
    return x, y


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """
    样本 Pearson 相关系数

    Raises:
        DegenerateInput: 长度不一致、少于 2 个点或任一序列方差为 0
    """
    x, y = _paired_arrays(xs, ys)
    if np.ptp(y) == 0:
        raise DegenerateInput("ys has zero variance")
    r = float(stats.pearsonr(x, y)[0])
    return min(1.0, max(-1.0, r))


def ols_fit(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """
    最小二乘直线 y = slope * x + intercept

    ys 为常数时斜率为 0。

    Raises:
        DegenerateInput: xs 方差为 0 或点数不足
    """
    x, y = _paired_arrays(xs, ys)
    result = stats.linregress(x, y)
    return float(result.slope), float(result.intercept)


def histogram_data(
    values: Sequence[float],
    bins: int = 20,
    log_scale: bool = False,
) -> List[Tuple[float, float, int]]:
    """
    等宽直方图，区间为 [low, high)，最后一个区间右端闭合

    Args:
        values: 时长（分钟）
        bins: 区间数
        log_scale: 是否先取自然对数

    Returns:
        (区间下界, 区间上界, 计数) 列表

    Raises:
        EmptyInput: values 为空
    """
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise EmptyInput("histogram of an empty sequence")
    if bins < 1:
        raise DomainViolation(f"bins must be >= 1, got {bins}")
    if log_scale:
        if np.any(data <= 0):
            raise DomainViolation("log-scaled histogram requires positive values")
        data = np.log(data)
    counts, edges = np.histogram(data, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]


def _describe(durations: np.ndarray, label: str) -> ProcedureSummary:
    if len(durations) == 1:
        logger.warning("%s has a single case; reporting sd as 0", label)
        return ProcedureSummary(1, float(durations[0]), 0.0, degenerate=True)
    return ProcedureSummary(len(durations), float(np.mean(durations)), float(np.std(durations, ddof=1)))


def summarize(ds: Dataset) -> Dict[str, ProcedureSummary]:
    """
    各手术及总体的样本量、均值与样本标准差（N-1 分母）

    返回字典的顺序为 Overall 在前，其后各手术按字母序。

    Raises:
        EmptyInput: 数据集为空
    """
    if len(ds) == 0:
        raise EmptyInput("cannot summarize an empty dataset")
    durations = ds.durations()
    procs = np.array([case.procedure_name for case in ds], dtype=object)
    result = {OVERALL: _describe(durations, OVERALL)}
    for name in ds.procedures:
        result[name] = _describe(durations[procs == name], name)
    return result


@dataclass(frozen=True)
class SkewSummary:
    """某手术原始时长与对数时长的样本偏度"""

    n: int
    raw: float
    log: float


def skewness_summary(ds: Dataset, min_cases: int = 3) -> Dict[str, SkewSummary]:
    """
    各手术的原始/对数时长偏度（scipy.stats.skew，有偏估计）

    病例数少于 min_cases 或时长为常数的手术不参与。
    """
    durations = ds.durations()
    procs = np.array([case.procedure_name for case in ds], dtype=object)
    result = {}
    for name in ds.procedures:
        values = durations[procs == name]
        if len(values) < min_cases or np.ptp(values) == 0:
            continue
        result[name] = SkewSummary(len(values), float(stats.skew(values)), float(stats.skew(np.log(values))))
    return result


def mean_skewness(ds: Dataset) -> Tuple[float, float]:
    """各手术偏度的平均值 (raw, log)"""
    summary = skewness_summary(ds)
    if not summary:
        raise DegenerateInput("no procedure has enough cases to estimate skewness")
    return (
        float(np.mean([s.raw for s in summary.values()])),
        float(np.mean([s.log for s in summary.values()])),
    )


@dataclass(frozen=True)
class WeightAgeFit:
    """体重对年龄的散点与回归结果"""

    ages: Tuple[float, ...]
    weights: Tuple[float, ...]
    pearson: float
    slope: float
    intercept: float


def weight_age_relation(ds: Dataset) -> WeightAgeFit:
    """
    体重（纵轴）对年龄（横轴）的 Pearson 相关与最小二乘直线

    Raises:
        DegenerateInput: 病例不足或年龄/体重为常数
    """
    ages = [case.age for case in ds]
    weights = [case.weight for case in ds]
    slope, intercept = ols_fit(ages, weights)
    return WeightAgeFit(tuple(ages), tuple(weights), pearson(ages, weights), slope, intercept)

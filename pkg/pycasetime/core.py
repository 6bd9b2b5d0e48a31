"""
pycasetime 核心类

提供高级 API: 装载数据集、选择方法与指标参数，运行交叉验证、p 扫描与绘图数据导出
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd

from .data_model import Dataset, filter_min_count, read_dataset
from .errors import EmptyInput
from .evaluation import (
    EvaluationReport,
    cross_validate,
    histogram_data,
    make_folds,
    weight_age_relation,
)
from .metric import DEFAULT_P_GRID, MetricParams, tau_curve
from .predictors import Hyperparams, MethodId, Predictor, fit
from .synth import SynthConfig, SynthResult, synth_generate

logger = logging.getLogger(__name__)


class CaseTimeStudy:
    """
    手术时长预测研究

    这是主要的接口类，把数据集、参评方法、指标参数与超参数组合在一起，
    按固定协议运行评估。

    Example:
        >>> from pycasetime import CaseTimeStudy
        >>> from pycasetime.predictors import MethodId
        >>>
        >>> # 使用内置合成数据
        >>> study = CaseTimeStudy.from_synthetic()
        >>> study.set_methods([MethodId.AVG, MethodId.SCH, MethodId.RFR_SCH])
        >>> report = study.evaluate()
        >>> print(report.ranking_chain())
        >>>
        >>> # 或读取 CSV
        >>> study = CaseTimeStudy.from_csv("./cases.csv")
    """

    # 参评手术的最少病例数
    MIN_PROCEDURE_COUNT = 40

    # 默认参评方法（全部八种）
    DEFAULT_METHODS = tuple(MethodId)

    def __init__(
        self,
        dataset: Dataset,
        metric: MetricParams = MetricParams(),
        hyperparams: Hyperparams = Hyperparams(),
        min_procedure_count: int = MIN_PROCEDURE_COUNT,
    ):
        """
        初始化研究

        Args:
            dataset: 原始数据集
            metric: 指标参数 (p, m, M)
            hyperparams: 学习方法的超参数
            min_procedure_count: 病例数少于该值的手术不参与评估
        """
        self.raw_dataset = dataset
        self.metric = metric
        self.hyperparams = hyperparams
        self.min_procedure_count = min_procedure_count
        self.methods: List[MethodId] = list(self.DEFAULT_METHODS)
        self.synthetic: Optional[SynthResult] = None
        self.report: Optional[EvaluationReport] = None
        self._dataset: Optional[Dataset] = None

    @classmethod
    def from_csv(cls, path: Union[str, Path], require_expert: bool = True, **kwargs) -> "CaseTimeStudy":
        """
        从 CSV 文件创建研究

        Args:
            path: 数据文件路径
            require_expert: 是否要求每行都有专家预测
            **kwargs: 透传给构造函数

        Raises:
            FileNotFoundError: 文件不存在
        """
        return cls(read_dataset(path, require_expert=require_expert), **kwargs)

    @classmethod
    def from_synthetic(cls, config: SynthConfig = SynthConfig(), **kwargs) -> "CaseTimeStudy":
        """用合成数据创建研究，真值保存在 study.synthetic 中"""
        result = synth_generate(config)
        study = cls(result.dataset, **kwargs)
        study.synthetic = result
        return study

    def set_methods(self, methods: Iterable[MethodId]) -> None:
        """
        设置参评方法

        Args:
            methods: 方法列表，重复项只保留第一次出现
        """
        methods = list(dict.fromkeys(methods))
        if not methods:
            raise EmptyInput("at least one method is required")
        self.methods = methods
        self.report = None

    def set_metric(self, metric: MetricParams) -> None:
        self.metric = metric
        self.report = None

    @property
    def dataset(self) -> Dataset:
        """按 min_procedure_count 过滤后的数据集"""
        if self._dataset is None:
            self._dataset = filter_min_count(self.raw_dataset, self.min_procedure_count)
            if len(self._dataset) == 0:
                raise EmptyInput(
                    f"no procedure has at least {self.min_procedure_count} cases"
                )
        return self._dataset

    def evaluate(
        self,
        repeats: int = 5,
        k: int = 5,
        seed: int = 0,
        stratify: bool = True,
        n_jobs: int = -1,
    ) -> EvaluationReport:
        """
        运行重复 k 折交叉验证

        Args:
            repeats: 重复次数，默认 5
            k: 折数，默认 5
            seed: 随机种子
            stratify: 是否按手术分层
            n_jobs: joblib 并行度，默认 -1 使用全部核

        Returns:
            EvaluationReport（同时保存在 self.report）
        """
        ds = self.dataset
        print(f"Evaluating {len(self.methods)} methods on {len(ds)} cases "
              f"({len(ds.procedures)} procedures), {repeats}x{k}-fold CV")
        plan = make_folds(ds, repeats=repeats, k=k, seed=seed, stratify=stratify)
        self.report = cross_validate(ds, self.methods, plan, self.metric, self.hyperparams, n_jobs=n_jobs)
        return self.report

    def sweep(self, p_grid: Sequence[float] = DEFAULT_P_GRID, **evaluate_kwargs) -> pd.DataFrame:
        """
        p 敏感性扫描（m, M 固定为当前指标参数）

        尚未评估时先运行 evaluate(**evaluate_kwargs)。
        """
        if self.report is None:
            self.evaluate(**evaluate_kwargs)
        return self.report.sweep(p_grid)

    def train(self, method: MethodId, seed: int = 0) -> Predictor:
        """在过滤后的完整数据集上拟合单个方法"""
        return fit(method, self.dataset, self.hyperparams, seed=seed)

    def figures(self, bins: int = 20, procedure: Optional[str] = None) -> Dict[str, pd.DataFrame]:
        """
        导出绘图数据

        Args:
            bins: 直方图区间数
            procedure: 只对该手术做直方图，None 表示全部病例

        Returns:
            {"histogram_raw", "histogram_log", "weight_age", "weight_age_fit", "tau_curve"} -> DataFrame
        """
        ds = self.dataset
        if procedure is not None:
            durations = [case.actual_duration for case in ds if case.procedure_name == procedure]
            if not durations:
                raise EmptyInput(f"procedure {procedure!r} has no cases")
        else:
            durations = list(ds.durations())

        columns = ["bin_low", "bin_high", "count"]
        relation = weight_age_relation(ds)
        return {
            "histogram_raw": pd.DataFrame(histogram_data(durations, bins), columns=columns),
            "histogram_log": pd.DataFrame(histogram_data(durations, bins, log_scale=True), columns=columns),
            "weight_age": pd.DataFrame({"age_years": relation.ages, "weight_kg": relation.weights}),
            "weight_age_fit": pd.DataFrame(
                [{"pearson": relation.pearson, "slope": relation.slope, "intercept": relation.intercept}]
            ),
            "tau_curve": pd.DataFrame(tau_curve(self.metric), columns=["predicted_min", "tau_min"]),
        }

    def print_summary(self) -> None:
        """打印评估结果"""
        if self.report is None:
            print("No evaluation has been run")
            return
        report = self.report
        print(f"Metric: p={report.metric.p}, m={report.metric.m}, M={report.metric.M}")
        print(f"{'Method':<10} {'Accuracy':>9} {'SE':>7} {'Error':>7}")
        for method in report.methods:
            stat = report.stat(method)
            print(f"{method.label:<10} {stat.mean:>9.4f} {stat.se:>7.4f} {stat.error:>7.4f}")
        print()
        print(f"Ranking: {report.ranking_chain()}")
        if len(report.methods) > 1 and report.procedures:
            print(f"Procedures won (of {len(report.procedures)}), row = baseline, column = challenger:")
            print(report.wins_frame().to_string(index=False))

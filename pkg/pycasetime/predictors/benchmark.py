"""
基准预测器: AVG（历史平均）与 SCH（排班专家预测）
"""
from collections import defaultdict
from typing import Dict, Tuple

from ..data_model import Dataset, SurgicalCase
from ..errors import CaseTimeError
from .base import MethodId, Predictor

# (手术, 医生) 组合至少需要的训练病例数
AVG_MIN_OBSERVATIONS = 5


class AvgPredictor(Predictor):
    """
    历史平均预测器（原始分钟）

    查找顺序: (手术, 医生) 均值（训练病例 >= AVG_MIN_OBSERVATIONS）
    -> 手术均值 -> 全局均值
    """

    method = MethodId.AVG

    def __init__(self, min_observations: int = AVG_MIN_OBSERVATIONS):
        self.min_observations = min_observations
        self.pair_means: Dict[Tuple[str, str], Tuple[float, int]] = {}
        self.procedure_means: Dict[str, float] = {}
        self.global_mean: float = 0.0
        self._fitted = False

    def fit(self, train: Dataset) -> "AvgPredictor":
        self._require_cases(train)
        pair_sums: Dict[Tuple[str, str], list] = defaultdict(lambda: [0.0, 0])
        proc_sums: Dict[str, list] = defaultdict(lambda: [0.0, 0])
        total = 0.0
        for case in train:
            y = case.actual_duration
            acc = pair_sums[(case.procedure_name, case.surgeon_id)]
            acc[0] += y
            acc[1] += 1
            acc = proc_sums[case.procedure_name]
            acc[0] += y
            acc[1] += 1
            total += y

        self.pair_means = {key: (s / n, n) for key, (s, n) in pair_sums.items()}
        self.procedure_means = {key: s / n for key, (s, n) in proc_sums.items()}
        self.global_mean = total / len(train)
        self._fitted = True
        return self

    def predict(self, case: SurgicalCase) -> float:
        if not self._fitted:
            raise CaseTimeError("AVG predictor used before fit")
        entry = self.pair_means.get((case.procedure_name, case.surgeon_id))
        if entry is not None and entry[1] >= self.min_observations:
            return entry[0]
        return self.procedure_means.get(case.procedure_name, self.global_mean)

    @property
    def is_fitted(self) -> bool:
        return self._fitted


class SchPredictor(Predictor):
    """直接返回病例自带的专家预测，与训练数据无关"""

    method = MethodId.SCH

    def __init__(self):
        self._fitted = False

    def fit(self, train: Dataset) -> "SchPredictor":
        self._require_cases(train)
        self._fitted = True
        return self

    def predict(self, case: SurgicalCase) -> float:
        return case.require_expert()

    @property
    def is_fitted(self) -> bool:
        return self._fitted

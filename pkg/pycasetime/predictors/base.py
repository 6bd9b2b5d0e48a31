"""
pycasetime 预测器基类定义

定义了方法标识与预测器抽象接口，所有预测方法（基准与学习模型）必须实现这些接口
"""
from abc import ABC, abstractmethod
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..data_model import Dataset, SurgicalCase
from ..errors import CaseTimeError, EmptyTrainingSet
from ..metric import PredictionPair


class MethodId(str, Enum):
    """八种预测方法"""

    AVG = "AVG"
    SCH = "SCH"
    DTR = "DTR"
    RFR = "RFR"
    ABR = "ABR"
    DTR_SCH = "DTR-SCH"
    RFR_SCH = "RFR-SCH"
    ABR_SCH = "ABR-SCH"

    @classmethod
    def parse(cls, token: str) -> "MethodId":
        """接受 'RFR-SCH'、'rfr_sch' 等写法"""
        key = token.strip().upper().replace("_", "-")
        for method in cls:
            if method.value == key:
                return method
        choices = ", ".join(method.value for method in cls)
        raise CaseTimeError(f"unknown method {token!r} (choose from {choices})")

    @property
    def label(self) -> str:
        return self.value

    @property
    def is_learned(self) -> bool:
        return self not in (MethodId.AVG, MethodId.SCH)

    @property
    def uses_expert(self) -> bool:
        """预测时是否需要专家预测"""
        return self is MethodId.SCH or self.value.endswith("-SCH")

    @property
    def family(self) -> str:
        """学习方法的模型族: tree / forest / boost；基准方法返回 benchmark"""
        return {
            "DTR": "tree",
            "RFR": "forest",
            "ABR": "boost",
        }.get(self.value.split("-")[0], "benchmark")


class Predictor(ABC):
    """预测器抽象基类"""

    method: MethodId

    @abstractmethod
    def fit(self, train: Dataset) -> "Predictor":
        """
        在训练集上拟合

        Args:
            train: 训练病例

        Returns:
            self，便于链式调用

        Raises:
            EmptyTrainingSet: 训练集为空
        """
        pass

    @abstractmethod
    def predict(self, case: SurgicalCase) -> float:
        """
        预测单个病例的时长

        Args:
            case: 待预测病例（actual_duration 不参与预测）

        Returns:
            预测时长（分钟），恒为正
        """
        pass

    @property
    @abstractmethod
    def is_fitted(self) -> bool:
        """是否已经拟合"""
        pass

    def predict_many(self, cases: Sequence[SurgicalCase]) -> np.ndarray:
        """批量预测，默认逐个调用 predict"""
        return np.array([self.predict(case) for case in cases], dtype=float)

    def predict_batch(self, cases: Sequence[SurgicalCase]) -> List[PredictionPair]:
        """
        批量预测并与实际时长配对

        Args:
            cases: 待预测病例

        Returns:
            与输入顺序一致的 PredictionPair 列表
        """
        if len(cases) == 0:
            return []
        predicted = self.predict_many(cases)
        return [
            PredictionPair(case.actual_duration, float(y_hat), case.procedure_name)
            for case, y_hat in zip(cases, predicted)
        ]

    def importance(self) -> Optional[np.ndarray]:
        """特征重要性，基准方法返回 None"""
        return None

    @property
    def feature_names(self) -> Optional[Sequence[str]]:
        return None

    def named_importance(self) -> Optional[Dict[str, float]]:
        """以特征名为键的重要性"""
        scores = self.importance()
        names = self.feature_names
        if scores is None or names is None:
            return None
        return {name: float(score) for name, score in zip(names, scores)}

    @staticmethod
    def _require_cases(train: Dataset) -> None:
        if len(train) == 0:
            raise EmptyTrainingSet("cannot fit a predictor on an empty training set")

    def __repr__(self) -> str:
        state = "fitted" if self.is_fitted else "unfitted"
        return f"<{type(self).__name__} {self.method.label} ({state})>"

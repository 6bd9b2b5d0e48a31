"""
学习型预测器: DTR / RFR / ABR 及其 -SCH 变体

所有模型都在 z = ln(actual_duration) 上训练，预测时取 exp 回到分钟。
-SCH 变体在特征末尾追加 ln(专家预测)。
"""
import logging
from abc import abstractmethod
from dataclasses import replace
from typing import Any, Dict, Optional, Sequence

import numpy as np

from ..cart import RegressionTree, TreeParams, export_tree, fit_tree, predict_tree_batch, tree_importance
from ..data_model import Dataset, EncodingSchema, SurgicalCase, build_schema, encode_many
from ..ensembles import (
    BoostedEnsemble,
    BoostParams,
    Forest,
    ForestParams,
    ensemble_importance,
    fit_adaboost_r2,
    fit_forest,
    predict_boosted_batch,
    predict_forest_batch,
)
from ..errors import CaseTimeError
from .base import MethodId, Predictor

logger = logging.getLogger(__name__)


class LearnedPredictor(Predictor):
    """
    学习型预测器基类

    子类只需实现 _fit_matrix / _predict_matrix / _importance，
    编码、对数变换和逆变换都在这里统一处理。
    """

    def __init__(self, method: MethodId, seed: int = 0):
        if not method.is_learned:
            raise CaseTimeError(f"{method.label} is not a learned method")
        self.method = method
        self.seed = seed
        self.schema: Optional[EncodingSchema] = None
        self.model: Any = None

    def fit(self, train: Dataset) -> "LearnedPredictor":
        self._require_cases(train)
        self.schema = build_schema(train, include_expert=self.method.uses_expert)
        X = encode_many(train.cases, self.schema)
        z = np.log(train.durations())
        self.model = self._fit_matrix(X, z)
        logger.debug("%s fitted on %d cases, %d features", self.method.label, len(train), self.schema.width)
        return self

    def predict_log_many(self, cases: Sequence[SurgicalCase]) -> np.ndarray:
        """批量预测对数时长"""
        if not self.is_fitted:
            raise CaseTimeError(f"{self.method.label} predictor used before fit")
        X = encode_many(cases, self.schema)
        return self._predict_matrix(X)

    def predict_many(self, cases: Sequence[SurgicalCase]) -> np.ndarray:
        if len(cases) == 0:
            return np.zeros(0, dtype=float)
        return np.exp(self.predict_log_many(cases))

    def predict(self, case: SurgicalCase) -> float:
        return float(self.predict_many([case])[0])

    @property
    def is_fitted(self) -> bool:
        return self.model is not None

    @property
    def feature_names(self) -> Optional[Sequence[str]]:
        return None if self.schema is None else self.schema.feature_names

    def importance(self) -> Optional[np.ndarray]:
        return None if self.model is None else self._importance()

    @abstractmethod
    def _fit_matrix(self, X: np.ndarray, z: np.ndarray) -> Any:
        pass

    @abstractmethod
    def _predict_matrix(self, X: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def _importance(self) -> np.ndarray:
        pass


class TreePredictor(LearnedPredictor):
    """单棵 CART 回归树（DTR / DTR-SCH）"""

    def __init__(self, method: MethodId, params: TreeParams = TreeParams(), seed: int = 0):
        super().__init__(method, seed)
        self.params = params

    def _fit_matrix(self, X: np.ndarray, z: np.ndarray) -> RegressionTree:
        return fit_tree(X, z, None, self.params)

    def _predict_matrix(self, X: np.ndarray) -> np.ndarray:
        return predict_tree_batch(self.model, X)

    def _importance(self) -> np.ndarray:
        return tree_importance(self.model)

    def export(self) -> Dict[str, Any]:
        """导出树结构（带特征名），供 train --export-tree 使用"""
        if not self.is_fitted:
            raise CaseTimeError("cannot export an unfitted tree")
        return export_tree(self.model, self.schema.feature_names)


class ForestPredictor(LearnedPredictor):
    """随机森林（RFR / RFR-SCH）"""

    def __init__(self, method: MethodId, params: ForestParams = ForestParams(), seed: int = 0):
        super().__init__(method, seed)
        self.params = replace(params, seed=seed)

    def _fit_matrix(self, X: np.ndarray, z: np.ndarray) -> Forest:
        return fit_forest(X, z, self.params)

    def _predict_matrix(self, X: np.ndarray) -> np.ndarray:
        return predict_forest_batch(self.model, X)

    def _importance(self) -> np.ndarray:
        return ensemble_importance(self.model)


class BoostedPredictor(LearnedPredictor):
    """AdaBoost.R2（ABR / ABR-SCH）"""

    def __init__(self, method: MethodId, params: BoostParams = BoostParams(), seed: int = 0):
        super().__init__(method, seed)
        self.params = replace(params, seed=seed)

    def _fit_matrix(self, X: np.ndarray, z: np.ndarray) -> BoostedEnsemble:
        return fit_adaboost_r2(X, z, self.params)

    def _predict_matrix(self, X: np.ndarray) -> np.ndarray:
        return predict_boosted_batch(self.model, X)

    def _importance(self) -> np.ndarray:
        return ensemble_importance(self.model)

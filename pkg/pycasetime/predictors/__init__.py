"""
pycasetime 预测器

提供统一的 fit / predict / predict_batch 入口，以及模型文件的保存与加载。

Usage:
    from pycasetime.predictors import MethodId, fit, predict_batch

    predictor = fit(MethodId.RFR_SCH, train, seed=7)
    pairs = predict_batch(predictor, test.cases)
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Type, Union

import joblib

from ..cart import TreeParams
from ..data_model import Dataset, SurgicalCase
from ..ensembles import BoostParams, ForestParams
from ..errors import CaseTimeError
from ..metric import PredictionPair
from .base import MethodId, Predictor
from .benchmark import AVG_MIN_OBSERVATIONS, AvgPredictor, SchPredictor
from .learned import BoostedPredictor, ForestPredictor, LearnedPredictor, TreePredictor

logger = logging.getLogger(__name__)

MODEL_FORMAT = "pycasetime-model"
MODEL_FORMAT_VERSION = 1

STUDY_MAX_FEATURES = "sqrt"


@dataclass(frozen=True)
class Hyperparams:
    """
    三个模型族的超参数

    研究默认让森林与 Boosting 的成员树在每个节点抽取 sqrt(d) 个候选特征。
    """

    tree: TreeParams = field(default_factory=TreeParams)
    forest: ForestParams = field(default_factory=lambda: ForestParams(max_features=STUDY_MAX_FEATURES))
    boost: BoostParams = field(default_factory=lambda: BoostParams(max_features=STUDY_MAX_FEATURES))


_LEARNED: Dict[str, Type[LearnedPredictor]] = {
    "tree": TreePredictor,
    "forest": ForestPredictor,
    "boost": BoostedPredictor,
}


def create_predictor(method: MethodId, hyperparams: Hyperparams = Hyperparams(), seed: int = 0) -> Predictor:
    """按方法标识创建未拟合的预测器"""
    if method is MethodId.AVG:
        return AvgPredictor()
    if method is MethodId.SCH:
        return SchPredictor()
    family = method.family
    params = {"tree": hyperparams.tree, "forest": hyperparams.forest, "boost": hyperparams.boost}[family]
    return _LEARNED[family](method, params, seed=seed)


def fit(
    method: MethodId,
    train: Dataset,
    hyperparams: Hyperparams = Hyperparams(),
    seed: int = 0,
) -> Predictor:
    """
    在训练集上拟合指定方法

    Args:
        method: 方法标识
        train: 训练集（非空）
        hyperparams: 超参数
        seed: 随机种子（森林与 Boosting 使用）

    Returns:
        已拟合的 Predictor

    Raises:
        EmptyTrainingSet: 训练集为空
        MissingExpertPrediction: -SCH 方法的训练病例缺少专家预测
    """
    return create_predictor(method, hyperparams, seed).fit(train)


def predict(predictor: Predictor, case: SurgicalCase) -> float:
    """单个病例的预测时长（分钟）"""
    return predictor.predict(case)


def predict_batch(predictor: Predictor, cases: Sequence[SurgicalCase]) -> List[PredictionPair]:
    """批量预测，返回与输入顺序一致的 PredictionPair 列表"""
    return predictor.predict_batch(cases)


def save_predictor(predictor: Predictor, path: Union[str, Path]) -> None:
    """用 joblib 保存已拟合的预测器"""
    if not predictor.is_fitted:
        raise CaseTimeError("refusing to save an unfitted predictor")
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "method": predictor.method.value,
        "predictor": predictor,
    }
    joblib.dump(payload, Path(path))
    logger.info("saved %s model to %s", predictor.method.label, path)


def load_predictor(path: Union[str, Path]) -> Predictor:
    """
    加载 save_predictor 写出的模型文件

    Raises:
        FileNotFoundError: 文件不存在
        CaseTimeError: 文件不是 pycasetime 模型
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    payload = joblib.load(path)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise CaseTimeError(f"{path} is not a pycasetime model file")
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise CaseTimeError(f"{path}: unsupported model format version {payload.get('version')}")
    return payload["predictor"]


__all__ = [
    "AVG_MIN_OBSERVATIONS",
    "AvgPredictor",
    "BoostedPredictor",
    "ForestPredictor",
    "Hyperparams",
    "LearnedPredictor",
    "MethodId",
    "Predictor",
    "STUDY_MAX_FEATURES",
    "SchPredictor",
    "TreePredictor",
    "create_predictor",
    "fit",
    "load_predictor",
    "predict",
    "predict_batch",
    "save_predictor",
]

"""
树集成: 随机森林与 AdaBoost.R2

两者都在对数时长上拟合，成员树均为 cart.fit_tree 产生的回归树。
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np

from .cart import (
    MaxFeatures,
    RegressionTree,
    TreeParams,
    check_max_features,
    fit_tree,
    predict_tree_batch,
    tree_importance,
)
from .errors import DegenerateEnsemble, EmptyInput, InvalidConfig, WidthMismatch

logger = logging.getLogger(__name__)

# 训练集被完美拟合（D == 0 或 beta == 0）时赋予的有限大权重
PERFECT_FIT_LOG_WEIGHT = 1e6
# 第一轮平均损失 >= 0.5 时仍保留该成员，但只给极小权重
MIN_LOG_WEIGHT = 1e-12
# 最大残差低于该值（乘以目标尺度）即视为完美拟合
_PERFECT_ATOL = 1e-12


class LossShape(str, Enum):
    """AdaBoost.R2 的样本损失形状"""

    LINEAR = "linear"
    SQUARE = "square"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, token: str) -> "LossShape":
        try:
            return cls(token.strip().lower())
        except ValueError:
            choices = ", ".join(shape.value for shape in cls)
            raise InvalidConfig(f"unknown loss shape {token!r} (choose from {choices})") from None


@dataclass(frozen=True)
class ForestParams:
    """
    随机森林参数

    Args:
        n_trees: 树的数量，默认 100
        bootstrap: 是否对每棵树做有放回抽样
        max_features: 每个节点的候选特征数，None 表示全部，也可以是 "sqrt" / "log2"
        tree_params: 成员树的生长门限
        seed: 随机种子
    """

    n_trees: int = 100
    bootstrap: bool = True
    max_features: MaxFeatures = None
    tree_params: TreeParams = field(default_factory=TreeParams)
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidConfig(f"n_trees must be >= 1, got {self.n_trees}")
        check_max_features(self.max_features)


@dataclass(frozen=True)
class BoostParams:
    """
    AdaBoost.R2 参数

    Args:
        n_estimators: 最大轮数，默认 50
        loss_shape: 样本损失形状，默认线性
        tree_params: 成员树的生长门限
        max_features: 成员树的候选特征数，None 表示全部，也可以是 "sqrt" / "log2"
        seed: 特征子采样的随机种子
    """

    n_estimators: int = 50
    loss_shape: LossShape = LossShape.LINEAR
    tree_params: TreeParams = field(default_factory=TreeParams)
    max_features: MaxFeatures = None
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise InvalidConfig(f"n_estimators must be >= 1, got {self.n_estimators}")
        check_max_features(self.max_features)


@dataclass(frozen=True, eq=False)
class Forest:
    """随机森林，预测为成员树的算术平均"""

    trees: Tuple[RegressionTree, ...]

    @property
    def feature_count(self) -> int:
        return self.trees[0].feature_count

    @property
    def member_weights(self) -> np.ndarray:
        return np.ones(len(self.trees), dtype=float)


@dataclass(frozen=True, eq=False)
class BoostedEnsemble:
    """AdaBoost.R2 集成，预测为以 ln(1/beta) 加权的中位数"""

    trees: Tuple[RegressionTree, ...]
    log_weights: np.ndarray

    @property
    def feature_count(self) -> int:
        return self.trees[0].feature_count

    @property
    def member_weights(self) -> np.ndarray:
        return self.log_weights


Ensemble = Union[Forest, BoostedEnsemble]


def _check_matrix(X, z) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("ensemble fit needs at least one sample")
    if z.shape != (X.shape[0],):
        raise WidthMismatch(f"X has {X.shape[0]} rows but z has shape {z.shape}")
    return X, z


def _check_width(model: Ensemble, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.feature_count:
        raise WidthMismatch(f"expected {model.feature_count} features, got {X.shape[1]}")
    return X


# ==================== 随机森林 ====================

def fit_forest(X: np.ndarray, z: np.ndarray, params: ForestParams = ForestParams()) -> Forest:
    """
    拟合随机森林

    每棵树使用由 SeedSequence(seed).spawn 派生的独立随机源，
    先做有放回抽样（N 取 N），再按 max_features 做节点特征子采样。

    Raises:
        EmptyInput: 没有样本
    """
    X, z = _check_matrix(X, z)
    n = X.shape[0]
    trees = []
    for child in np.random.SeedSequence(params.seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        if params.bootstrap:
            idx = rng.integers(0, n, n)
            Xb, zb = X[idx], z[idx]
        else:
            Xb, zb = X, z
        trees.append(
            fit_tree(Xb, zb, None, params.tree_params, rng=rng, max_features=params.max_features)
        )
    logger.debug("fitted forest of %d trees on %d samples", len(trees), n)
    return Forest(tuple(trees))


def predict_forest_batch(forest: Forest, X: np.ndarray) -> np.ndarray:
    X = _check_width(forest, X)
    return np.mean([predict_tree_batch(tree, X) for tree in forest.trees], axis=0)


def predict_forest(forest: Forest, x: Sequence[float]) -> float:
    """单个样本的森林预测（对数分钟）"""
    return float(predict_forest_batch(forest, np.asarray(x, dtype=float)[None, :])[0])


# ==================== AdaBoost.R2 ====================

def sample_losses(residuals: np.ndarray, shape: LossShape = LossShape.LINEAR) -> np.ndarray:
    """
    把归一化残差 r/D（位于 [0, 1]）映射为样本损失

    linear: r，square: r^2，exponential: 1 - exp(-r)
    """
    r = np.asarray(residuals, dtype=float)
    if shape is LossShape.SQUARE:
        return r * r
    if shape is LossShape.EXPONENTIAL:
        return 1.0 - np.exp(-r)
    return r


def boost_reweight(weights: np.ndarray, losses: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """
    AdaBoost.R2 的一次权重更新

    Args:
        weights: 当前样本权重（和为 1）
        losses: 样本损失，位于 [0, 1]

    Returns:
        (新权重, beta, 平均损失)；beta = L/(1-L)，w_i <- w_i * beta^(1-L_i) 后归一化。
        平均损失为 0 时 beta 为 0，为 1 时 beta 为 inf，两种情况权重都原样返回。
    """
    weights = np.asarray(weights, dtype=float)
    losses = np.asarray(losses, dtype=float)
    avg_loss = float(np.dot(weights, losses))
    if avg_loss <= 0:
        return weights.copy(), 0.0, avg_loss
    if avg_loss >= 1:
        return weights.copy(), math.inf, avg_loss
    beta = avg_loss / (1.0 - avg_loss)
    updated = weights * np.power(beta, 1.0 - losses)
    return updated / updated.sum(), beta, avg_loss


def fit_adaboost_r2(X: np.ndarray, z: np.ndarray, params: BoostParams = BoostParams()) -> BoostedEnsemble:
    """
    拟合 AdaBoost.R2 集成

    每轮在当前权重下拟合一棵加权回归树；最大残差为 0 或 beta 为 0 时
    以 PERFECT_FIT_LOG_WEIGHT 保存并停止；平均损失 >= 0.5 时停止
    （第一轮仍以 MIN_LOG_WEIGHT 保留，之后的轮次丢弃）。

    Raises:
        EmptyInput: 没有样本
        DegenerateEnsemble: 没有保留任何成员
    """
    X, z = _check_matrix(X, z)
    n = X.shape[0]
    rng = np.random.default_rng(params.seed) if params.max_features is not None else None
    perfect_atol = _PERFECT_ATOL * max(1.0, float(np.max(np.abs(z))))

    w = np.full(n, 1.0 / n)
    trees = []
    log_weights = []
    for round_no in range(params.n_estimators):
        tree = fit_tree(X, z, w, params.tree_params, rng=rng, max_features=params.max_features)
        residuals = np.abs(z - predict_tree_batch(tree, X))
        worst = float(residuals.max())
        if worst <= perfect_atol:
            trees.append(tree)
            log_weights.append(PERFECT_FIT_LOG_WEIGHT)
            logger.debug("round %d fits the training set exactly, stopping", round_no + 1)
            break

        losses = sample_losses(residuals / worst, params.loss_shape)
        w_next, beta, avg_loss = boost_reweight(w, losses)
        if avg_loss >= 0.5:
            if not trees:
                trees.append(tree)
                log_weights.append(MIN_LOG_WEIGHT)
            logger.debug("round %d average loss %.4f >= 0.5, stopping", round_no + 1, avg_loss)
            break
        if beta <= 0:
            trees.append(tree)
            log_weights.append(PERFECT_FIT_LOG_WEIGHT)
            break

        trees.append(tree)
        log_weights.append(math.log(1.0 / beta))
        w = w_next

    if not trees:
        raise DegenerateEnsemble("boosting retained no members")
    logger.debug("fitted boosted ensemble of %d members on %d samples", len(trees), n)
    return BoostedEnsemble(tuple(trees), np.asarray(log_weights, dtype=float))


def weighted_median(values: Sequence[float], weights: Sequence[float]) -> float:
    """
    加权中位数: 按取值升序排列后，累计权重首次 >= 总权重一半处的取值

    Raises:
        EmptyInput: values 为空
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        raise EmptyInput("weighted median of an empty sequence")
    if weights.shape != values.shape:
        raise WidthMismatch(f"{values.size} values but {weights.size} weights")
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(weights[order])
    pos = int(np.argmax(cumulative >= 0.5 * cumulative[-1]))
    return float(values[order[pos]])


def predict_boosted_batch(ensemble: BoostedEnsemble, X: np.ndarray) -> np.ndarray:
    X = _check_width(ensemble, X)
    preds = np.vstack([predict_tree_batch(tree, X) for tree in ensemble.trees])
    order = np.argsort(preds, axis=0, kind="stable")
    cumulative = np.cumsum(ensemble.log_weights[order], axis=0)
    pos = np.argmax(cumulative >= 0.5 * cumulative[-1], axis=0)
    cols = np.arange(preds.shape[1])
    return preds[order[pos, cols], cols]


def predict_boosted(ensemble: BoostedEnsemble, x: Sequence[float]) -> float:
    """单个样本的加权中位数预测（对数分钟）"""
    return float(predict_boosted_batch(ensemble, np.asarray(x, dtype=float)[None, :])[0])


def ensemble_importance(model: Ensemble) -> np.ndarray:
    """
    成员树重要性的加权平均（森林等权，Boosting 按 ln(1/beta)），再归一化

    所有成员都没有分裂时返回全 0 向量。
    """
    weights = model.member_weights
    scores = np.zeros(model.feature_count, dtype=float)
    for tree, weight in zip(model.trees, weights):
        scores += weight * tree_importance(tree)
    total = scores.sum()
    if total <= 0:
        return np.zeros(model.feature_count, dtype=float)
    return scores / total

"""
CART 回归树

在编码后的特征矩阵上以加权平方误差（对数空间）贪心地二分。
约定:
    - 阈值取相邻两个不同取值的中点，x <= threshold 走左子树
    - 平局时取特征下标最小者，其次取阈值最小者
    - 节点记录 risk_decrease = 父节点加权 SSE - 子节点加权 SSE
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import EmptyInput, InvalidConfig, WidthMismatch

logger = logging.getLogger(__name__)

LEAF = -1

# 候选特征数: 整数、按宽度换算的规则名，或 None（全部特征）
MaxFeatures = Union[int, str, None]
MAX_FEATURES_RULES = ("sqrt", "log2")

# SSE 比较的容差: 相对节点 SSE 的部分 + 按权重计的绝对下限
_SSE_RTOL = 1e-10
_SSE_ATOL = 1e-20


@dataclass(frozen=True)
class TreeParams:
    """
    树的生长门限

    Args:
        min_samples_split: 节点样本数不少于该值才尝试分裂，默认 10
        max_depth: 最大深度，None 表示不限
        min_samples_leaf: 叶子最少样本数，默认 1
    """

    min_samples_split: int = 10
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.min_samples_split < 2:
            raise InvalidConfig(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.min_samples_leaf < 1:
            raise InvalidConfig(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidConfig(f"max_depth must be >= 0, got {self.max_depth}")


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """
    以数组存储的二叉回归树，节点 0 为根

    feature[i] == LEAF 表示叶子；value 为落入节点的训练目标的加权均值（对数分钟），
    weight 为权重和，n_samples 为样本数。
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    n_samples: np.ndarray
    risk_decrease: np.ndarray
    feature_count: int

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def split_count(self) -> int:
        return int(np.count_nonzero(self.feature != LEAF))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def same_structure(self, other: "RegressionTree") -> bool:
        """两棵树的拓扑、分裂与叶值是否完全一致"""
        return self.feature_count == other.feature_count and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("feature", "threshold", "left", "right", "value", "n_samples")
        )


def _sse_tolerance(node_sse: float, weight_sum: float) -> float:
    return _SSE_RTOL * node_sse + _SSE_ATOL * weight_sum


def _split_search(
    X: np.ndarray,
    z: np.ndarray,
    w: np.ndarray,
    min_samples_leaf: int,
    tol: float,
) -> Optional[Tuple[int, float, float]]:
    """
    在 X 的所有列上同时搜索最佳分裂

    Args:
        X: (n, f) 候选特征矩阵
        z: 目标（建议已减去节点均值，降低消去误差）
        w: 非负权重
        min_samples_leaf: 每侧至少的样本数
        tol: 判定平局的 SSE 容差

    Returns:
        (列号, 阈值, 分裂后 SSE)，没有合法分裂时返回 None
    """
    n = X.shape[0]
    if n < 2:
        return None

    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    zs = z[order]
    ws = w[order]

    cw = np.cumsum(ws, axis=0)
    cwz = np.cumsum(ws * zs, axis=0)
    cwz2 = np.cumsum(ws * zs * zs, axis=0)

    lw, lwz, lwz2 = cw[:-1], cwz[:-1], cwz2[:-1]
    rw, rwz, rwz2 = cw[-1] - lw, cwz[-1] - lwz, cwz2[-1] - lwz2
    with np.errstate(divide="ignore", invalid="ignore"):
        left_sse = np.where(lw > 0, lwz2 - lwz * lwz / lw, 0.0)
        right_sse = np.where(rw > 0, rwz2 - rwz * rwz / rw, 0.0)
    sse = np.maximum(left_sse, 0.0) + np.maximum(right_sse, 0.0)

    # 分裂位置 i 表示前 i+1 个样本走左边
    left_count = np.arange(1, n)[:, None]
    valid = (xs[1:] > xs[:-1]) & (left_count >= min_samples_leaf) & (n - left_count >= min_samples_leaf)
    if not valid.any():
        return None

    sse = np.where(valid, sse, np.inf)
    ties = sse <= sse.min() + tol
    col = int(np.argmax(ties.any(axis=0)))
    pos = int(np.argmax(ties[:, col]))

    lo, hi = xs[pos, col], xs[pos + 1, col]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:
        # 相邻浮点数时中点可能舍入到右端
        threshold = lo
    return col, float(threshold), float(sse[pos, col])


def best_split(
    X: np.ndarray,
    z: np.ndarray,
    w: np.ndarray,
    feature_index: int,
) -> Optional[Tuple[float, float]]:
    """
    单个特征上的最佳阈值

    Args:
        X: 特征矩阵
        z: 对数时长目标
        w: 非负权重
        feature_index: 候选特征列

    Returns:
        (阈值, 分裂后加权 SSE)；该特征为常数时返回 None
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    column = X[:, [feature_index]]
    wsum = float(w.sum())
    mean = float(np.dot(w, z) / wsum) if wsum > 0 else float(z.mean())
    resid = z - mean
    node_sse = float(np.dot(w, resid * resid))
    found = _split_search(column, resid, w, 1, _sse_tolerance(node_sse, wsum))
    if found is None:
        return None
    _, threshold, sse = found
    return threshold, sse


def check_max_features(max_features: MaxFeatures) -> None:
    """
    校验 max_features 的取值（不依赖特征宽度）

    Raises:
        InvalidConfig: 非正整数或未知规则名
    """
    if max_features is None:
        return
    if isinstance(max_features, str):
        if max_features not in MAX_FEATURES_RULES:
            rules = ", ".join(MAX_FEATURES_RULES)
            raise InvalidConfig(f"unknown max_features rule {max_features!r} (choose from {rules})")
        return
    if max_features < 1:
        raise InvalidConfig(f"max_features must be >= 1, got {max_features}")


def resolve_max_features(max_features: MaxFeatures, width: int) -> Optional[int]:
    """
    把 max_features 换算为具体的候选特征数

    None 表示全部特征；"sqrt" / "log2" 按宽度换算并至少为 1；
    超过宽度的整数截断为宽度，此时等价于不做特征子采样。

    Raises:
        InvalidConfig: 非法取值
    """
    check_max_features(max_features)
    if max_features is None:
        return None
    if max_features == "sqrt":
        count = int(math.sqrt(width))
    elif max_features == "log2":
        count = int(math.log2(width)) if width > 1 else 1
    else:
        count = int(max_features)
    return max(1, min(count, width))


def _check_inputs(X, z, w) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("fit needs at least one sample")
    if z.shape != (X.shape[0],):
        raise WidthMismatch(f"X has {X.shape[0]} rows but z has shape {z.shape}")
    if w is None:
        w = np.ones(X.shape[0], dtype=float)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (X.shape[0],):
            raise WidthMismatch(f"X has {X.shape[0]} rows but w has shape {w.shape}")
    return X, z, w


def fit_tree(
    X: np.ndarray,
    z: np.ndarray,
    w: Optional[np.ndarray] = None,
    params: TreeParams = TreeParams(),
    rng: Optional[np.random.Generator] = None,
    max_features: MaxFeatures = None,
) -> RegressionTree:
    """
    拟合一棵 CART 回归树

    Args:
        X: (n, d) 特征矩阵
        z: 对数时长目标
        w: 样本权重，None 表示全 1
        params: 生长门限
        rng: 特征子采样的随机源（随机森林使用）
        max_features: 每个节点候选特征数，None 表示全部特征；
            超过 d 的整数按 d 处理，"sqrt" / "log2" 按 d 换算

    Returns:
        RegressionTree

    Raises:
        EmptyInput: 没有样本
        InvalidConfig: max_features 非法
    """
    X, z, w = _check_inputs(X, z, w)
    n, d = X.shape
    max_features = resolve_max_features(max_features, d)
    subsample = rng is not None and max_features is not None and max_features < d
    all_features = np.arange(d)

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    weight: List[float] = []
    n_samples: List[int] = []
    risk_decrease: List[float] = []

    # 先序生长: 右子树先压栈，左子树先处理
    stack: List[Tuple[np.ndarray, int, int, bool]] = [(np.arange(n), 0, -1, True)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node

        zi, wi = z[idx], w[idx]
        wsum = float(wi.sum())
        mean = float(np.dot(wi, zi) / wsum) if wsum > 0 else float(zi.mean())
        resid = zi - mean
        node_sse = float(np.dot(wi, resid * resid))

        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(mean)
        weight.append(wsum)
        n_samples.append(len(idx))
        risk_decrease.append(0.0)

        can_split = (
            len(idx) >= params.min_samples_split
            and len(idx) >= 2 * params.min_samples_leaf
            and (params.max_depth is None or depth < params.max_depth)
            and np.ptp(zi) > 0
        )
        if not can_split:
            continue

        if subsample:
            candidates = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            candidates = all_features
        tol = _sse_tolerance(node_sse, wsum)
        found = _split_search(X[np.ix_(idx, candidates)], resid, wi, params.min_samples_leaf, tol)
        if found is None or not found[2] < node_sse - tol:
            continue

        col, thr, child_sse = found
        j = int(candidates[col])
        feature[node] = j
        threshold[node] = thr
        risk_decrease[node] = node_sse - child_sse

        goes_left = X[idx, j] <= thr
        stack.append((idx[~goes_left], depth + 1, node, False))
        stack.append((idx[goes_left], depth + 1, node, True))

    tree = RegressionTree(
        feature=np.asarray(feature, dtype=int),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=int),
        right=np.asarray(right, dtype=int),
        value=np.asarray(value, dtype=float),
        weight=np.asarray(weight, dtype=float),
        n_samples=np.asarray(n_samples, dtype=int),
        risk_decrease=np.asarray(risk_decrease, dtype=float),
        feature_count=d,
    )
    logger.debug("fitted tree: %d samples, %d nodes, %d splits", n, tree.node_count, tree.split_count)
    return tree


def predict_tree(tree: RegressionTree, x: Sequence[float]) -> float:
    """
    单个样本的预测（对数分钟）

    Raises:
        WidthMismatch: 特征宽度与树不一致
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (tree.feature_count,):
        raise WidthMismatch(f"expected {tree.feature_count} features, got shape {x.shape}")
    node = 0
    while tree.feature[node] != LEAF:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = tree.left[node]
        else:
            node = tree.right[node]
    return float(tree.value[node])


def apply_tree(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    """返回每行样本落入的叶子编号"""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != tree.feature_count:
        raise WidthMismatch(f"expected {tree.feature_count} features, got shape {X.shape}")
    node = np.zeros(X.shape[0], dtype=int)
    while True:
        f = tree.feature[node]
        active = np.flatnonzero(f != LEAF)
        if active.size == 0:
            return node
        current = node[active]
        go_left = X[active, f[active]] <= tree.threshold[current]
        node[active] = np.where(go_left, tree.left[current], tree.right[current])


def predict_tree_batch(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    """批量预测（对数分钟）"""
    return tree.value[apply_tree(tree, X)]


def tree_importance(tree: RegressionTree) -> np.ndarray:
    """
    基于风险下降的特征重要性，和为 1

    没有任何分裂的树返回全 0 向量。
    """
    internal = tree.feature != LEAF
    scores = np.bincount(
        tree.feature[internal],
        weights=tree.risk_decrease[internal],
        minlength=tree.feature_count,
    ).astype(float)
    total = scores.sum()
    if total <= 0:
        return np.zeros(tree.feature_count, dtype=float)
    return scores / total


def training_sse(tree: RegressionTree, X: np.ndarray, z: np.ndarray, w: Optional[np.ndarray] = None) -> float:
    """训练集上的加权 SSE"""
    z = np.asarray(z, dtype=float)
    w = np.ones_like(z) if w is None else np.asarray(w, dtype=float)
    resid = z - predict_tree_batch(tree, X)
    return float(np.dot(w, resid * resid))


def export_tree(tree: RegressionTree, feature_names: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """
    导出为嵌套字典，便于以 JSON 形式检查

    内部节点: {"feature", "threshold", "risk_decrease", "n", "left", "right"}
    叶子:     {"value", "n", "weight"}
    格式不保证跨版本稳定。
    """

    def name(j: int) -> str:
        return feature_names[j] if feature_names is not None else f"x[{j}]"

    def build(i: int) -> Dict[str, Any]:
        if tree.feature[i] == LEAF:
            return {
                "value": float(tree.value[i]),
                "n": int(tree.n_samples[i]),
                "weight": float(tree.weight[i]),
            }
        return {
            "feature": name(int(tree.feature[i])),
            "threshold": float(tree.threshold[i]),
            "risk_decrease": float(tree.risk_decrease[i]),
            "n": int(tree.n_samples[i]),
            "left": build(int(tree.left[i])),
            "right": build(int(tree.right[i])),
        }

    return build(0)

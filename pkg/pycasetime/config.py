"""
运行配置

RunConfig 由 YAML 配置文件与命令行参数合成，优先级: 默认值 < 配置文件 < 命令行。
所有层级都拒绝未知键。

配置文件示例:

    metric: {p: 0.2, m: 15, M: 60}
    methods: [AVG, SCH, RFR, RFR-SCH]
    cv: {repeats: 5, k: 5, seed: 0, stratify: true}
    forest: {n_trees: 100, max_features: sqrt}
    min_procedure_count: 40
"""
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cart import MaxFeatures, TreeParams, check_max_features
from .ensembles import BoostParams, ForestParams, LossShape
from .errors import CaseTimeError, InvalidConfig
from .metric import DEFAULT_CAP, DEFAULT_M, DEFAULT_P, DEFAULT_P_GRID, MetricParams
from .predictors import STUDY_MAX_FEATURES, Hyperparams, MethodId
from .synth import SynthConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MetricSection(_Section):
    p: float = Field(DEFAULT_P, gt=0, lt=1)
    m: float = Field(DEFAULT_M, ge=0)
    M: float = DEFAULT_CAP

    @model_validator(mode="after")
    def _cap_above_floor(self):
        if not self.M > self.m:
            raise ValueError(f"M must exceed m (m={self.m}, M={self.M})")
        return self


class CvSection(_Section):
    repeats: int = Field(5, ge=1)
    k: int = Field(5, ge=2)
    seed: int = 0
    stratify: bool = True
    n_jobs: int = -1


class TreeSection(_Section):
    min_samples_split: int = Field(10, ge=2)
    max_depth: Optional[int] = Field(None, ge=0)
    min_samples_leaf: int = Field(1, ge=1)


class _MemberTreeSection(_Section):
    """成员树的特征子采样；研究默认 sqrt，null 表示全部特征"""

    max_features: Union[int, str, None] = STUDY_MAX_FEATURES

    @field_validator("max_features")
    @classmethod
    def _known_max_features(cls, value: MaxFeatures) -> MaxFeatures:
        try:
            check_max_features(value)
        except InvalidConfig as e:
            raise ValueError(str(e)) from None
        return value


class ForestSection(_MemberTreeSection):
    n_trees: int = Field(100, ge=1)
    bootstrap: bool = True


class BoostSection(_MemberTreeSection):
    n_estimators: int = Field(50, ge=1)
    loss: LossShape = LossShape.LINEAR


class SynthSection(_Section):
    n_procedures: int = Field(12, ge=1)
    cases_per_procedure: int = Field(80, ge=1)
    n_surgeons: int = Field(30, ge=1)
    log_noise_sigma: float = Field(0.25, ge=0)
    expert_noise_sigma: float = Field(0.15, ge=0)
    expert_bias: float = 0.0
    seed: int = 0


class PathsSection(_Section):
    input: Optional[str] = None
    output_dir: str = "out"


class SweepSection(_Section):
    p_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_P_GRID))

    @field_validator("p_grid")
    @classmethod
    def _grid_in_range(cls, grid: List[float]) -> List[float]:
        if not grid:
            raise ValueError("p_grid must not be empty")
        for p in grid:
            if not 0 < p < 1:
                raise ValueError(f"p_grid values must lie in (0, 1), got {p}")
        return grid


class FiguresSection(_Section):
    bins: int = Field(20, ge=1)
    procedure: Optional[str] = None


class RunConfig(_Section):
    """完整运行配置"""

    metric: MetricSection = Field(default_factory=MetricSection)
    methods: List[str] = Field(default_factory=lambda: [method.value for method in MethodId])
    cv: CvSection = Field(default_factory=CvSection)
    tree: TreeSection = Field(default_factory=TreeSection)
    forest: ForestSection = Field(default_factory=ForestSection)
    boost: BoostSection = Field(default_factory=BoostSection)
    synth: SynthSection = Field(default_factory=SynthSection)
    min_procedure_count: int = Field(40, ge=1)
    paths: PathsSection = Field(default_factory=PathsSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    figures: FiguresSection = Field(default_factory=FiguresSection)

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, methods: List[str]) -> List[str]:
        if not methods:
            raise ValueError("methods must not be empty")
        try:
            return [MethodId.parse(token).value for token in methods]
        except CaseTimeError as e:
            raise ValueError(str(e)) from None

    def method_ids(self) -> List[MethodId]:
        return [MethodId(value) for value in self.methods]

    def metric_params(self) -> MetricParams:
        return MetricParams(self.metric.p, self.metric.m, self.metric.M)

    def hyperparams(self) -> Hyperparams:
        tree = TreeParams(
            min_samples_split=self.tree.min_samples_split,
            max_depth=self.tree.max_depth,
            min_samples_leaf=self.tree.min_samples_leaf,
        )
        return Hyperparams(
            tree=tree,
            forest=ForestParams(
                n_trees=self.forest.n_trees,
                bootstrap=self.forest.bootstrap,
                max_features=self.forest.max_features,
                tree_params=tree,
            ),
            boost=BoostParams(
                n_estimators=self.boost.n_estimators,
                loss_shape=self.boost.loss,
                tree_params=tree,
                max_features=self.boost.max_features,
            ),
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**self.synth.model_dump())


def merge_overrides(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """
    把 overrides 递归合并进 base（返回新字典）

    值为 None 的覆盖项被忽略，表示命令行没有给出该参数。
    """
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge_overrides(dict(merged[key]), value)
        elif isinstance(value, Mapping):
            merged[key] = merge_overrides({}, value)
        else:
            merged[key] = value
    return merged


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    读取配置文件并应用覆盖项

    Args:
        path: YAML 配置文件路径，None 表示只用默认值
        overrides: 嵌套字典形式的覆盖项（通常来自命令行）

    Returns:
        校验通过的 RunConfig

    Raises:
        FileNotFoundError: 配置文件不存在
        InvalidConfig: YAML 无法解析、存在未知键或取值非法
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise InvalidConfig(f"{path}: cannot parse YAML: {e}") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise InvalidConfig(f"{path}: top level must be a mapping")
        data = loaded

    data = merge_overrides(data, overrides or {})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        where = f"{path}: " if path is not None else ""
        raise InvalidConfig(f"{where}invalid configuration:\n{e}") from e

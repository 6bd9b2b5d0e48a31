"""
合成数据生成器

按对数正态模型生成带已知真值的手术病例:
    z = g(x) + eta,  eta ~ N(0, log_noise_sigma^2)
    g(x) = base(procedure) + weight_coefficient * ln(weight)
           + surgeon_offset + location_offset * 1[OR] + class_offset * 1[InPatient]
专家预测 exp(g(x) + expert_bias + eta')，eta' 与 eta 独立。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, TextIO, Tuple

import numpy as np
from scipy import optimize, stats

from .data_model import (
    AsaClass,
    Dataset,
    Gender,
    Location,
    PatientClass,
    Provenance,
    SurgicalCase,
)
from .errors import InvalidConfig

logger = logging.getLogger(__name__)

# 默认手术及其平均时长（分钟）
DEFAULT_PROCEDURES: Tuple[Tuple[str, float], ...] = (
    ("Adenoidectomy", 29.36),
    ("Bilateral Ear Myringotomy with Tubes", 28.60),
    ("Bone Marrow Aspiration", 39.83),
    ("Bronchoscopy (Pulmonary)", 33.33),
    ("Colonoscopy with Biopsy", 71.32),
    ("Dental Rehabilitation", 121.03),
    ("Esophagogastroduodenoscopy (EGD) with Biopsy", 34.94),
    ("Laparoscopic Appendectomy", 54.99),
    ("Lumbar Puncture with Intrathecal Chemotherapy", 39.54),
    ("Myringotomy with Tubes", 32.74),
    ("Portacath Removal", 31.98),
    ("Tonsillectomy And Adenoidectomy", 29.96),
)

# 体重-年龄: ln(weight) = WEIGHT_LOG_INTERCEPT + WEIGHT_LOG_SLOPE * age + scatter
WEIGHT_LOG_INTERCEPT = math.log(9.0)
WEIGHT_LOG_SLOPE = 0.115
AGE_RANGE = (0.5, 18.0)

# 体重项以 20 kg 为中心，使默认基线接近各手术的平均时长
_REFERENCE_WEIGHT = 20.0

ASA_PROBS = (0.45, 0.35, 0.15, 0.04, 0.01)
P_OR = 0.6
P_INPATIENT = 0.3
P_MALE = 0.5


@dataclass(frozen=True)
class SynthConfig:
    """
    合成数据配置

    Args:
        n_procedures: 手术种类数
        cases_per_procedure: 每种手术的病例数
        n_surgeons: 医生总数
        log_noise_sigma: 对数时长噪声标准差（0 表示无噪声）
        expert_noise_sigma: 专家预测的对数噪声标准差
        expert_bias: 专家预测的对数偏差（负值表示低估），默认 0
        procedure_base_logmeans: 各手术的基线对数时长，None 使用默认值
        surgeon_offsets: 各医生的对数偏移，None 时按种子抽取
        surgeon_offset_sigma: 抽取医生偏移时的标准差
        surgeons_per_procedure: 每种手术的医生池大小
        location_offset: OR 相对 APU 的对数偏移
        class_offset: 住院相对门诊的对数偏移
        weight_coefficient: ln(体重) 的系数
        target_weight_age_corr: 目标 Pearson(体重, 年龄)
        seed: 随机种子
    """

    n_procedures: int = 12
    cases_per_procedure: int = 80
    n_surgeons: int = 30
    log_noise_sigma: float = 0.25
    expert_noise_sigma: float = 0.15
    expert_bias: float = 0.0
    procedure_base_logmeans: Optional[Tuple[float, ...]] = None
    surgeon_offsets: Optional[Tuple[float, ...]] = None
    surgeon_offset_sigma: float = 0.15
    surgeons_per_procedure: int = 4
    location_offset: float = 0.25
    class_offset: float = 0.15
    weight_coefficient: float = 0.15
    target_weight_age_corr: float = 0.85
    seed: int = 0

    def validate(self) -> None:
        """检查配置合法性，非法时抛出 InvalidConfig"""
        for name in ("n_procedures", "cases_per_procedure", "n_surgeons", "surgeons_per_procedure"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.log_noise_sigma < 0 or self.expert_noise_sigma < 0:
            raise InvalidConfig("noise sigmas must be non-negative")
        if not 0 < self.target_weight_age_corr < 1:
            raise InvalidConfig(
                f"target_weight_age_corr must lie in (0, 1), got {self.target_weight_age_corr}"
            )
        if self.procedure_base_logmeans is not None and len(self.procedure_base_logmeans) != self.n_procedures:
            raise InvalidConfig("procedure_base_logmeans must have n_procedures entries")
        if self.surgeon_offsets is not None and len(self.surgeon_offsets) != self.n_surgeons:
            raise InvalidConfig("surgeon_offsets must have n_surgeons entries")

    def procedure_names(self) -> List[str]:
        names = [name for name, _ in DEFAULT_PROCEDURES[: self.n_procedures]]
        names += [f"Procedure {i + 1:02d}" for i in range(len(names), self.n_procedures)]
        return names

    def base_logmeans(self) -> np.ndarray:
        if self.procedure_base_logmeans is not None:
            return np.asarray(self.procedure_base_logmeans, dtype=float)
        means = [mu for _, mu in DEFAULT_PROCEDURES[: self.n_procedures]]
        means += [40.0] * (self.n_procedures - len(means))
        return np.log(means) - self.weight_coefficient * math.log(_REFERENCE_WEIGHT)


@dataclass(frozen=True)
class SynthResult:
    """合成数据集及其真值 g(x)（按 case_id 索引）"""

    dataset: Dataset
    true_log_duration: Dict[str, float] = field(compare=False)
    weight_log_scatter: float = 0.0


def _tune_weight_scatter(age: np.ndarray, xi: np.ndarray, target: float) -> float:
    """
    在已抽取的年龄与标准正态扰动上求解散布 s，使实际 Pearson(体重, 年龄) 等于目标值
    """
    if len(age) < 3 or np.ptp(age) == 0:
        return 0.2

    def gap(s: float) -> float:
        weight = np.exp(WEIGHT_LOG_INTERCEPT + WEIGHT_LOG_SLOPE * age + s * xi)
        return stats.pearsonr(weight, age)[0] - target

    lo, hi = 0.0, 3.0
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo <= 0:
        logger.warning("target correlation %.3f unreachable, using zero scatter", target)
        return lo
    if g_hi >= 0:
        return hi
    return float(optimize.brentq(gap, lo, hi, xtol=1e-10))


def synth_generate(cfg: SynthConfig = SynthConfig()) -> SynthResult:
    """
    生成合成数据集，给定种子时结果完全确定

    Args:
        cfg: 生成配置

    Returns:
        SynthResult，包含 Dataset（provenance 为 Synthetic）与真值 g(x)

    Raises:
        InvalidConfig: 配置非法
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    n = cfg.n_procedures * cfg.cases_per_procedure
    names = cfg.procedure_names()
    base = cfg.base_logmeans()

    if cfg.surgeon_offsets is not None:
        surgeon_offsets = np.asarray(cfg.surgeon_offsets, dtype=float)
    else:
        surgeon_offsets = rng.normal(0.0, cfg.surgeon_offset_sigma, cfg.n_surgeons)

    pool_size = min(cfg.surgeons_per_procedure, cfg.n_surgeons)
    pools = np.array(
        [rng.choice(cfg.n_surgeons, size=pool_size, replace=False) for _ in range(cfg.n_procedures)]
    )

    proc = np.repeat(np.arange(cfg.n_procedures), cfg.cases_per_procedure)
    age = rng.uniform(AGE_RANGE[0], AGE_RANGE[1], n)
    xi = rng.standard_normal(n)
    surgeon = pools[proc, rng.integers(0, pool_size, n)]
    is_or = rng.random(n) < P_OR
    is_inpatient = rng.random(n) < P_INPATIENT
    is_male = rng.random(n) < P_MALE
    asa = rng.choice(len(ASA_PROBS), size=n, p=ASA_PROBS) + 1
    # 无论噪声是否为 0 都先抽取，保证随机序列与 sigma 无关
    eta = rng.standard_normal(n) * cfg.log_noise_sigma
    eta_expert = rng.standard_normal(n) * cfg.expert_noise_sigma

    scatter = _tune_weight_scatter(age, xi, cfg.target_weight_age_corr)
    weight = np.exp(WEIGHT_LOG_INTERCEPT + WEIGHT_LOG_SLOPE * age + scatter * xi)

    g = (
        base[proc]
        + cfg.weight_coefficient * np.log(weight)
        + surgeon_offsets[surgeon]
        + cfg.location_offset * is_or
        + cfg.class_offset * is_inpatient
    )
    actual = np.exp(g + eta)
    expert = np.exp(g + cfg.expert_bias + eta_expert)

    width = len(str(n))
    cases = []
    truth = {}
    for i in range(n):
        case_id = f"syn{i + 1:0{width}d}"
        cases.append(
            SurgicalCase(
                case_id=case_id,
                gender=Gender.MALE if is_male[i] else Gender.FEMALE,
                weight=float(weight[i]),
                age=float(age[i]),
                asa=AsaClass(int(asa[i])),
                surgeon_id=f"S{surgeon[i] + 1}",
                location=Location.OR if is_or[i] else Location.APU,
                patient_class=PatientClass.INPATIENT if is_inpatient[i] else PatientClass.OUTPATIENT,
                procedure_name=names[proc[i]],
                expert_prediction=float(expert[i]),
                actual_duration=float(actual[i]),
            )
        )
        truth[case_id] = float(g[i])

    logger.info(
        "generated %d synthetic cases (%d procedures, weight scatter %.4f)",
        n, cfg.n_procedures, scatter,
    )
    return SynthResult(Dataset(tuple(cases), Provenance.SYNTHETIC), truth, scatter)


def write_ground_truth(result: SynthResult, sink: TextIO) -> None:
    """写出真值旁车文件: case_id,true_log_duration,true_median_duration_min"""
    sink.write("case_id,true_log_duration,true_median_duration_min\n")
    for case in result.dataset:
        g = result.true_log_duration[case.case_id]
        sink.write(f"{case.case_id},{g!r},{math.exp(g)!r}\n")

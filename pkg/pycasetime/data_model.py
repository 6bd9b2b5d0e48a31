"""
手术病例数据模型

定义病例记录、CSV 读写与校验、特征编码以及对数变换。
所有类型构造后不可变，可以在线程间共享。
"""
import csv
import io
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .errors import (
    CaseTimeError,
    DomainViolation,
    DuplicateId,
    EmptyTrainingSet,
    MalformedRow,
    MissingExpertPrediction,
)

logger = logging.getLogger(__name__)

# CSV 表头（顺序固定）
CSV_COLUMNS = (
    "case_id",
    "procedure_name",
    "surgeon_id",
    "gender",
    "weight_kg",
    "age_years",
    "asa",
    "location",
    "patient_class",
    "expert_prediction_min",
    "actual_duration_min",
)

# 十进制实数，拒绝 Python float() 额外接受的 "1_000"、"nan"、"inf" 等写法
_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class Gender(str, Enum):
    MALE = "Male"
    FEMALE = "Female"

    @classmethod
    def parse(cls, token: str) -> "Gender":
        key = token.strip().lower()
        if key in ("m", "male"):
            return cls.MALE
        if key in ("f", "female"):
            return cls.FEMALE
        raise DomainViolation(f"unknown gender {token!r} (expected M or F)")

    @property
    def code(self) -> str:
        return "M" if self is Gender.MALE else "F"


class Location(str, Enum):
    OR = "OR"
    APU = "APU"

    @classmethod
    def parse(cls, token: str) -> "Location":
        key = token.strip().upper()
        if key == "OR":
            return cls.OR
        if key == "APU":
            return cls.APU
        raise DomainViolation(f"unknown location {token!r} (expected OR or APU)")

    @property
    def code(self) -> str:
        return self.value


class PatientClass(str, Enum):
    INPATIENT = "InPatient"
    OUTPATIENT = "OutPatient"

    @classmethod
    def parse(cls, token: str) -> "PatientClass":
        key = token.strip().lower()
        if key in ("in", "inpatient"):
            return cls.INPATIENT
        if key in ("out", "outpatient"):
            return cls.OUTPATIENT
        raise DomainViolation(f"unknown patient class {token!r} (expected IN or OUT)")

    @property
    def code(self) -> str:
        return "IN" if self is PatientClass.INPATIENT else "OUT"


class AsaClass(IntEnum):
    """
    ASA 身体状况分级（I-V），按严重程度有序

    VI 级（脑死亡供体）不会出现在择期手术数据中，导入时拒绝。
    """

    I = 1
    II = 2
    III = 3
    IV = 4
    V = 5

    @classmethod
    def parse(cls, token: str) -> "AsaClass":
        key = token.strip().upper()
        if key.startswith("ASA"):
            key = key[3:].strip()
        try:
            return cls[key]
        except KeyError:
            raise DomainViolation(f"ASA class {token!r} outside I-V") from None

    @property
    def roman(self) -> str:
        return self.name


class Provenance(str, Enum):
    CSV = "Csv"
    SYNTHETIC = "Synthetic"


@dataclass(frozen=True)
class SurgicalCase:
    """
    一台已排程的手术

    Attributes:
        case_id: 病例标识
        gender: 患者性别
        weight: 体重（千克），> 0
        age: 年龄（岁），>= 0
        asa: ASA 分级
        surgeon_id: 主刀医生
        location: OR 或 APU
        patient_class: 住院 / 门诊
        procedure_name: 手术名称
        expert_prediction: 医生预估时长（分钟），宽松导入时可以为 None
        actual_duration: 实际时长（分钟），> 0
    """

    case_id: str
    gender: Gender
    weight: float
    age: float
    asa: AsaClass
    surgeon_id: str
    location: Location
    patient_class: PatientClass
    procedure_name: str
    expert_prediction: Optional[float]
    actual_duration: float

    def __post_init__(self):
        if not self.case_id:
            raise DomainViolation("case_id must be non-empty")
        if not self.procedure_name:
            raise DomainViolation("procedure_name must be non-empty")
        if not self.surgeon_id:
            raise DomainViolation("surgeon_id must be non-empty")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise DomainViolation(f"weight must be positive, got {self.weight}")
        if not (self.age >= 0 and math.isfinite(self.age)):
            raise DomainViolation(f"age must be non-negative, got {self.age}")
        if not (self.actual_duration > 0 and math.isfinite(self.actual_duration)):
            raise DomainViolation(f"actual duration must be positive, got {self.actual_duration}")
        if self.expert_prediction is not None and not (
            self.expert_prediction > 0 and math.isfinite(self.expert_prediction)
        ):
            raise DomainViolation(f"expert prediction must be positive, got {self.expert_prediction}")

    @property
    def has_expert(self) -> bool:
        return self.expert_prediction is not None

    def require_expert(self) -> float:
        """返回专家预测，缺失时抛出 MissingExpertPrediction"""
        if self.expert_prediction is None:
            raise MissingExpertPrediction(f"case {self.case_id!r} has no expert prediction")
        return self.expert_prediction


@dataclass(frozen=True)
class Dataset:
    """有序病例集合，case_id 唯一，迭代顺序稳定"""

    cases: Tuple[SurgicalCase, ...]
    provenance: Provenance = Provenance.CSV

    def __post_init__(self):
        object.__setattr__(self, "cases", tuple(self.cases))
        seen = set()
        for case in self.cases:
            if case.case_id in seen:
                raise DuplicateId(case.case_id)
            seen.add(case.case_id)

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self) -> Iterator[SurgicalCase]:
        return iter(self.cases)

    def __getitem__(self, index: int) -> SurgicalCase:
        return self.cases[index]

    @property
    def procedures(self) -> List[str]:
        """按字母序排列的手术名称"""
        return sorted({case.procedure_name for case in self.cases})

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.cases[i] for i in indices), self.provenance)

    def durations(self) -> np.ndarray:
        return np.array([case.actual_duration for case in self.cases], dtype=float)


# ==================== CSV 解析 ====================

def _parse_real(token: str, column: str, line_no: Optional[int]) -> float:
    text = token.strip()
    if not _DECIMAL_RE.match(text):
        raise MalformedRow(f"column {column}: cannot parse {token!r} as a number", line_no)
    return float(text)


def parse_case_row(
    row: Sequence[str],
    line_no: Optional[int] = None,
    require_expert: bool = True,
) -> SurgicalCase:
    """
    解析一行 CSV 字段为 SurgicalCase

    Args:
        row: 按 CSV_COLUMNS 顺序排列的 11 个字符串字段
        line_no: 行号（用于错误信息）
        require_expert: 为 False 时允许专家预测字段为空

    Returns:
        校验通过的 SurgicalCase

    Raises:
        MalformedRow: 列数不对或数字无法解析
        DomainViolation: 取值违反领域约束
    """
    if len(row) != len(CSV_COLUMNS):
        raise MalformedRow(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line_no)

    fields = dict(zip(CSV_COLUMNS, row))
    try:
        expert_text = fields["expert_prediction_min"].strip()
        if expert_text == "" and not require_expert:
            expert = None
        else:
            expert = _parse_real(expert_text, "expert_prediction_min", line_no)

        return SurgicalCase(
            case_id=fields["case_id"].strip(),
            procedure_name=fields["procedure_name"].strip(),
            surgeon_id=fields["surgeon_id"].strip(),
            gender=Gender.parse(fields["gender"]),
            weight=_parse_real(fields["weight_kg"], "weight_kg", line_no),
            age=_parse_real(fields["age_years"], "age_years", line_no),
            asa=AsaClass.parse(fields["asa"]),
            location=Location.parse(fields["location"]),
            patient_class=PatientClass.parse(fields["patient_class"]),
            expert_prediction=expert,
            actual_duration=_parse_real(fields["actual_duration_min"], "actual_duration_min", line_no),
        )
    except DomainViolation as e:
        if e.line_no is None and line_no is not None:
            raise type(e)(str(e), line_no) from None
        raise


@dataclass(frozen=True)
class DatasetScan:
    """scan_dataset 的结果：有效病例与全部行错误"""

    cases: Tuple[SurgicalCase, ...]
    errors: Tuple[CaseTimeError, ...]
    n_rows: int

    @property
    def ok(self) -> bool:
        return not self.errors


def _text_stream(source: Union[BinaryIO, TextIO]) -> TextIO:
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def _iter_rows(stream: TextIO) -> Iterator[Tuple[int, List[str]]]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow("missing header", 1) from None
    if [h.strip() for h in header] != list(CSV_COLUMNS):
        raise MalformedRow(f"header must be exactly: {','.join(CSV_COLUMNS)}", 1)
    for row in reader:
        if not row:
            continue
        yield reader.line_num, row


def scan_dataset(source: Union[BinaryIO, TextIO], require_expert: bool = True) -> DatasetScan:
    """
    扫描整个 CSV，收集所有行错误而不是遇错即停（供 validate 子命令使用）

    表头错误仍然直接抛出。
    """
    cases: List[SurgicalCase] = []
    errors: List[CaseTimeError] = []
    seen = set()
    n_rows = 0
    for line_no, row in _iter_rows(_text_stream(source)):
        n_rows += 1
        try:
            case = parse_case_row(row, line_no, require_expert=require_expert)
        except CaseTimeError as e:
            errors.append(e)
            continue
        if case.case_id in seen:
            errors.append(DuplicateId(case.case_id, line_no))
            continue
        seen.add(case.case_id)
        cases.append(case)
    return DatasetScan(tuple(cases), tuple(errors), n_rows)


def load_dataset(source: Union[BinaryIO, TextIO], require_expert: bool = True) -> Dataset:
    """
    读取 UTF-8 CSV（带表头）为 Dataset

    Args:
        source: 字节流（也接受文本流）
        require_expert: 是否要求每行都有专家预测

    Returns:
        provenance 为 Csv 的 Dataset，仅有表头时为空数据集

    Raises:
        MalformedRow / DomainViolation: 第一条出错的行
        DuplicateId: case_id 重复
    """
    cases: List[SurgicalCase] = []
    seen = set()
    for line_no, row in _iter_rows(_text_stream(source)):
        case = parse_case_row(row, line_no, require_expert=require_expert)
        if case.case_id in seen:
            raise DuplicateId(case.case_id, line_no)
        seen.add(case.case_id)
        cases.append(case)
    logger.info("loaded %d cases", len(cases))
    return Dataset(tuple(cases), Provenance.CSV)


def read_dataset(path: Union[str, Path], require_expert: bool = True) -> Dataset:
    """从文件路径读取数据集"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    with open(path, "rb") as f:
        return load_dataset(f, require_expert=require_expert)


def _format_real(value: float) -> str:
    # repr 保证 float 往返精确
    return repr(float(value))


def case_to_row(case: SurgicalCase) -> List[str]:
    return [
        case.case_id,
        case.procedure_name,
        case.surgeon_id,
        case.gender.code,
        _format_real(case.weight),
        _format_real(case.age),
        case.asa.roman,
        case.location.code,
        case.patient_class.code,
        "" if case.expert_prediction is None else _format_real(case.expert_prediction),
        _format_real(case.actual_duration),
    ]


def write_dataset(ds: Dataset, sink: TextIO) -> None:
    """把数据集写成 CSV，load_dataset 读回后与原数据集相等"""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for case in ds:
        writer.writerow(case_to_row(case))


def filter_min_count(ds: Dataset, min_count: int) -> Dataset:
    """
    只保留出现次数 >= min_count 的手术的病例，保持相对顺序

    该操作幂等。
    """
    if min_count < 1:
        raise DomainViolation(f"min_count must be >= 1, got {min_count}")
    counts = Counter(case.procedure_name for case in ds)
    kept = tuple(case for case in ds if counts[case.procedure_name] >= min_count)
    dropped = len(ds) - len(kept)
    if dropped:
        logger.info("filter_min_count(%d): dropped %d cases", min_count, dropped)
    return Dataset(kept, ds.provenance)


# ==================== 对数变换 ====================

def log_duration(y: float) -> float:
    """分钟 -> 对数分钟（自然对数）"""
    if not y > 0:
        raise DomainViolation(f"log transform requires a positive duration, got {y}")
    return math.log(y)


def inv_log(z: float) -> float:
    """对数分钟 -> 分钟"""
    return math.exp(z)


# ==================== 特征编码 ====================

# 原始特征分组名（用于按原始特征汇总重要性）
GROUP_GENDER = "Gender"
GROUP_WEIGHT = "Weight"
GROUP_AGE = "Age"
GROUP_ASA = "ASA Score"
GROUP_SURGEON = "Primary Surgeon"
GROUP_LOCATION = "Location"
GROUP_CLASS = "Patient Class"
GROUP_PROCEDURE = "Procedure Name"
GROUP_EXPERT = "Expert Prediction"

FEATURE_GROUPS = (
    GROUP_GENDER,
    GROUP_WEIGHT,
    GROUP_AGE,
    GROUP_ASA,
    GROUP_SURGEON,
    GROUP_LOCATION,
    GROUP_CLASS,
    GROUP_PROCEDURE,
    GROUP_EXPERT,
)

EXPERT_FEATURE = "expert_prediction_log"


@dataclass(frozen=True)
class EncodingSchema:
    """
    特征编码方案

    词表只来自训练集；未见过的类别在对应 one-hot 块中编码为全 0。
    列顺序: weight, age, asa, gender=*, location=*, patient_class=*,
    surgeon=*, procedure=*, [expert_prediction_log]
    """

    genders: Tuple[str, ...]
    locations: Tuple[str, ...]
    patient_classes: Tuple[str, ...]
    surgeons: Tuple[str, ...]
    procedures: Tuple[str, ...]
    include_expert: bool
    feature_names: Tuple[str, ...] = field(init=False)
    feature_groups: Tuple[str, ...] = field(init=False)
    _offsets: Dict[str, Dict[str, int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = ["weight", "age", "asa"]
        groups = [GROUP_WEIGHT, GROUP_AGE, GROUP_ASA]
        offsets: Dict[str, Dict[str, int]] = {}
        for block, vocab, group in self._blocks():
            offsets[block] = {}
            for level in vocab:
                offsets[block][level] = len(names)
                names.append(f"{block}={level}")
                groups.append(group)
        if self.include_expert:
            names.append(EXPERT_FEATURE)
            groups.append(GROUP_EXPERT)
        object.__setattr__(self, "feature_names", tuple(names))
        object.__setattr__(self, "feature_groups", tuple(groups))
        object.__setattr__(self, "_offsets", offsets)

    def _blocks(self):
        return (
            ("gender", self.genders, GROUP_GENDER),
            ("location", self.locations, GROUP_LOCATION),
            ("patient_class", self.patient_classes, GROUP_CLASS),
            ("surgeon", self.surgeons, GROUP_SURGEON),
            ("procedure", self.procedures, GROUP_PROCEDURE),
        )

    @property
    def width(self) -> int:
        return len(self.feature_names)

    def column(self, block: str, level: str) -> Optional[int]:
        """返回某个类别取值对应的列号，未见过的取值返回 None"""
        return self._offsets[block].get(level)


def build_schema(train: Dataset, include_expert: bool) -> EncodingSchema:
    """
    从训练集构建编码方案，各词表按字典序排序

    Raises:
        EmptyTrainingSet: 训练集为空
    """
    if len(train) == 0:
        raise EmptyTrainingSet("cannot build an encoding schema from an empty training set")
    return EncodingSchema(
        genders=tuple(sorted({c.gender.value for c in train})),
        locations=tuple(sorted({c.location.value for c in train})),
        patient_classes=tuple(sorted({c.patient_class.value for c in train})),
        surgeons=tuple(sorted({c.surgeon_id for c in train})),
        procedures=tuple(sorted({c.procedure_name for c in train})),
        include_expert=include_expert,
    )


def _fill_row(out: np.ndarray, case: SurgicalCase, schema: EncodingSchema) -> None:
    out[0] = case.weight
    out[1] = case.age
    out[2] = int(case.asa)
    for block, level in (
        ("gender", case.gender.value),
        ("location", case.location.value),
        ("patient_class", case.patient_class.value),
        ("surgeon", case.surgeon_id),
        ("procedure", case.procedure_name),
    ):
        col = schema.column(block, level)
        if col is not None:
            out[col] = 1.0
    if schema.include_expert:
        out[-1] = math.log(case.require_expert())


def encode(case: SurgicalCase, schema: EncodingSchema) -> np.ndarray:
    """
    把单个病例编码为实数特征向量

    数值特征原样保留（ASA 取序数），类别特征按词表 one-hot，
    专家预测（若包含）取自然对数。
    """
    row = np.zeros(schema.width, dtype=float)
    _fill_row(row, case, schema)
    return row


def encode_many(cases: Sequence[SurgicalCase], schema: EncodingSchema) -> np.ndarray:
    """批量编码，返回 (n_cases, width) 矩阵"""
    X = np.zeros((len(cases), schema.width), dtype=float)
    for i, case in enumerate(cases):
        _fill_row(X[i], case, schema)
    return X

"""
pycasetime 异常定义

所有领域错误都继承自 CaseTimeError（同时也是 ValueError），
CLI 据此把数据/校验失败映射为退出码 1。
"""
from typing import Optional


class CaseTimeError(ValueError):
    """pycasetime 所有领域错误的基类"""


class MalformedRow(CaseTimeError):
    """CSV 行格式错误（列数不对、数字无法解析）"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DomainViolation(CaseTimeError):
    """取值违反领域约束（非正时长、ASA 超出 I-V 等）"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MissingExpertPrediction(DomainViolation):
    """病例缺少专家预测，但当前方法需要它（SCH 或 -SCH 变体）"""


class DuplicateId(CaseTimeError):
    """数据集中出现重复的 case_id"""

    def __init__(self, case_id: str, line_no: Optional[int] = None):
        self.case_id = case_id
        self.line_no = line_no
        message = f"duplicate case_id: {case_id!r}"
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class EmptyTrainingSet(CaseTimeError):
    """训练集为空"""


class EmptyInput(CaseTimeError):
    """输入为空（无预测对、无样本等）"""


class WidthMismatch(CaseTimeError):
    """特征向量宽度与模型不一致"""


class DegenerateInput(CaseTimeError):
    """统计量无定义（零方差、样本数不足）"""


class DegenerateEnsemble(CaseTimeError):
    """集成模型没有保留任何成员"""


class StratumTooSmall(CaseTimeError):
    """某个手术分层的样本数少于折数 k"""

    def __init__(self, procedure_name: str, size: int, k: int):
        self.procedure_name = procedure_name
        self.size = size
        self.k = k
        super().__init__(
            f"stratum {procedure_name!r} has {size} cases, fewer than k={k} folds"
        )


class InvalidConfig(CaseTimeError):
    """配置参数非法"""


class ModelFitError(CaseTimeError):
    """交叉验证中某个单元格的拟合失败，携带 (repeat, fold, method) 上下文"""

    def __init__(self, repeat: int, fold: int, method: str, cause: Exception):
        self.repeat = repeat
        self.fold = fold
        self.method = method
        super().__init__(f"repeat={repeat} fold={fold} method={method}: {cause}")

"""异常定义

所有业务异常都继承自 GeoweakError，并携带 CLI 使用的退出码：
0 成功，1 数据/校验错误，2 I/O 或格式错误。
"""
from typing import Optional

EXIT_VALIDATION = 1
EXIT_IO = 2


class GeoweakError(Exception):
    """geoweak 异常基类"""

    exit_code = EXIT_VALIDATION


class DataFormatError(GeoweakError):
    """文件头或整体结构无法识别"""

    exit_code = EXIT_IO


class RecordError(GeoweakError):
    """单条记录格式错误（严格模式下立即抛出）"""

    exit_code = EXIT_IO

    def __init__(self, index: int, message: str, record_id: Optional[int] = None):
        self.index = index
        self.record_id = record_id
        self.reason = message
        where = f"第 {index} 条记录"
        if record_id is not None:
            where += f" (id={record_id})"
        super().__init__(f"{where}: {message}")


class GeometryError(GeoweakError):
    """退化几何（零面积、共线角点等）"""


class ConsistencyError(GeoweakError):
    """清单与数据集之间的 id 不一致"""


class SplitError(GeoweakError):
    """划分或标注比例无法满足"""


class SynthesisError(GeoweakError):
    """合成数据参数不可行"""


class ConfigError(GeoweakError):
    """实验配置无效"""


class StageError(GeoweakError):
    """流水线某一阶段失败，附带阶段名"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        if isinstance(cause, OSError):
            self.exit_code = EXIT_IO
        else:
            self.exit_code = getattr(cause, "exit_code", EXIT_VALIDATION)
        super().__init__(f"[{stage}] {cause}")

"""配置管理

两类配置：
- Config：用户级设置（~/.geoweak/config.json），存储位置、日志级别、默认参数
- ExperimentConfig：单次实验的扁平 JSON 配置，未知键视为错误
"""
import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class Config:
    """配置管理器"""

    DEFAULT_CONFIG_PATH = Path.home() / ".geoweak" / "config.json"

    DEFAULT_CONFIG = {
        "storage": {
            "type": "sqlite",
            "sqlite": {
                "db_path": str(Path.home() / ".geoweak" / "runs.db")
            }
        },
        "logging": {
            "level": "INFO"
        },
        "cluster": {
            "eps_m": 2000.0,
            "min_pts": 3
        },
        "split": {
            "ratios": [0.7, 0.15, 0.15],
            "meridian": -98.58
        }
    }

    def __init__(self, config_path: str = None):
        """
        Args:
            config_path: 配置文件路径，默认为 ~/.geoweak/config.json
        """
        self.config_path = Path(config_path) if config_path else self.DEFAULT_CONFIG_PATH
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """加载配置文件，缺失的键用默认值补齐"""
        config = copy.deepcopy(self.DEFAULT_CONFIG)
        if self.config_path.exists():
            try:
                with open(self.config_path, "r", encoding="utf-8") as f:
                    _deep_update(config, json.load(f))
            except (OSError, ValueError):
                pass
        return config

    def _save_config(self):
        """保存配置文件"""
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_path, "w", encoding="utf-8") as f:
            json.dump(self.config, f, indent=2, ensure_ascii=False)

    def get_storage_type(self) -> str:
        """获取运行记录的存储类型"""
        return self.get("storage.type", "sqlite")

    def get_storage_config(self, storage_type: str = None) -> Dict[str, Any]:
        """获取指定存储的配置"""
        if not storage_type:
            storage_type = self.get_storage_type()
        return self.config.get("storage", {}).get(storage_type, {})

    def get(self, key: str, default=None):
        """获取配置项（点号分隔的路径）"""
        keys = key.split(".")
        value = self.config
        for k in keys:
            if isinstance(value, dict):
                value = value.get(k)
            else:
                return default
        return value if value is not None else default

    def set(self, key: str, value: Any):
        """设置配置项并写回文件"""
        keys = key.split(".")
        config = self.config
        for k in keys[:-1]:
            if k not in config or not isinstance(config[k], dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value
        self._save_config()


def _deep_update(target: Dict[str, Any], source: Dict[str, Any]) -> None:
    for key, value in source.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            _deep_update(target[key], value)
        else:
            target[key] = value


# 全局配置实例
_config = None


def get_config() -> Config:
    """获取全局配置实例"""
    global _config
    if _config is None:
        _config = Config()
    return _config


def set_config(config: Optional[Config]) -> None:
    """替换全局配置实例（CLI --settings 与测试使用）"""
    global _config
    _config = config


class ExperimentConfig(BaseModel):
    """实验配置

    数据来源二选一：dataset_path 指向检测数据集文件；为空时按 synth_* 生成合成语料。
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    # 数据
    dataset_path: Optional[str] = None
    points_path: Optional[str] = None
    predictions_path: Optional[str] = None
    lenient: bool = False

    # 划分
    strategy: str = "cluster-random"
    split_ratios: List[float] = Field(default_factory=lambda: [0.7, 0.15, 0.15])
    meridian: float = -98.58
    splits_path: Optional[str] = None
    eps_m: float = Field(2000.0, gt=0)
    min_pts: int = Field(3, ge=1)

    # 标注比例
    fractions: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.10])
    stratify: bool = True
    point_source: str = "box_center"

    # 教师模拟
    center_sigma: float = Field(0.0, ge=0)
    scale_sigma: float = Field(0.0, ge=0)
    drop_rate: float = Field(0.0, ge=0, le=1)
    score_alpha: float = Field(5.0, gt=0)
    score_beta: float = Field(2.0, gt=0)

    # 评估
    iou_thresholds: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])

    seed: int = 0
    out_dir: str = "geoweak_out"
    workers: int = Field(4, ge=1)

    # 合成语料
    synth_images: int = Field(500, ge=1)
    synth_objects_min: int = Field(1, ge=0)
    synth_objects_max: int = Field(4, ge=1)
    synth_classes: int = Field(1, ge=1)
    synth_countries: int = Field(4, ge=1)
    synth_farm_spread_m: float = Field(300.0, gt=0)
    synth_images_per_farm: int = Field(5, ge=1)
    synth_negative_fraction: float = Field(0.0, ge=0, lt=1)

    @field_validator("strategy")
    @classmethod
    def _check_strategy(cls, v: str) -> str:
        if v not in ("cluster-random", "region", "predefined"):
            raise ValueError(f"未知的划分策略: {v}")
        return v

    @field_validator("point_source")
    @classmethod
    def _check_point_source(cls, v: str) -> str:
        if v not in ("box_center", "source_point"):
            raise ValueError(f"未知的点来源: {v}")
        return v

    @field_validator("fractions")
    @classmethod
    def _check_fractions(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("fractions 不能为空")
        if any(not 0 < f <= 1 for f in v):
            raise ValueError("fractions 必须位于 (0, 1]")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("fractions 必须严格递增")
        return v

    @field_validator("iou_thresholds")
    @classmethod
    def _check_thresholds(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("iou_thresholds 不能为空")
        if any(not 0 < t <= 1 for t in v):
            raise ValueError("IoU 阈值必须位于 (0, 1]")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("IoU 阈值必须严格递增")
        return v

    @field_validator("split_ratios")
    @classmethod
    def _check_ratios(cls, v: List[float]) -> List[float]:
        if len(v) != 3 or any(r <= 0 for r in v):
            raise ValueError("split_ratios 需要 3 个正数 (train, val, test)")
        if abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("split_ratios 之和必须为 1")
        return v

    @model_validator(mode="after")
    def _check_sources(self) -> "ExperimentConfig":
        if self.synth_objects_min > self.synth_objects_max:
            raise ValueError("synth_objects_min 不能大于 synth_objects_max")
        if self.strategy == "predefined" and not self.splits_path:
            raise ValueError("predefined 策略需要 splits_path")
        return self

    def config_hash(self) -> str:
        """配置的 SHA-256（规范化 JSON）；输出目录与线程数不影响结果，不参与计算"""
        data = self.model_dump(mode="json", exclude={"out_dir", "workers"})
        payload = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_experiment_config(path: Optional[str] = None, **overrides) -> ExperimentConfig:
    """读取实验配置文件；overrides 中值为 None 的项被忽略"""
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
        except ValueError as e:
            raise ConfigError(f"配置文件不是合法 JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("配置文件顶层必须是对象")

    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e

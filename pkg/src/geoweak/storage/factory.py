"""仓储工厂 - 根据配置创建运行记录仓储"""
from ..config import get_config
from ..errors import ConfigError
from .repository import RunRepository


def create_repository() -> RunRepository:
    """
    根据配置创建仓储实例

    Raises:
        ConfigError: 未知的存储类型
    """
    config = get_config()
    storage_type = config.get_storage_type()

    if storage_type == "sqlite":
        storage_config = config.get_storage_config("sqlite")
        db_path = storage_config.get("db_path", "geoweak_runs.db")
        return RunRepository(db_path=db_path)

    raise ConfigError(
        f"未知的存储类型: {storage_type}。\n"
        f"支持的类型: sqlite"
    )

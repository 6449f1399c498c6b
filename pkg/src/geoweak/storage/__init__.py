"""运行记录持久化模块"""
from .factory import create_repository
from .repository import RunEntry, RunRepository, RunStatus

__all__ = ["RunEntry", "RunRepository", "RunStatus", "create_repository"]

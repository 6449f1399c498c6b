"""运行记录仓储（SQLite）

只记录实验的元数据与摘要；产物文件本身在输出目录中，不入库。
"""
import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, DateTime, Integer, String, Text, create_engine
from sqlalchemy import Enum as SQLEnum
from sqlalchemy.orm import Session, declarative_base, sessionmaker

Base = declarative_base()


class RunStatus(Enum):
    """运行状态"""
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass
class RunEntry:
    """一次 run 命令的登记信息"""
    config_hash: str
    out_dir: str
    status: RunStatus = RunStatus.RUNNING
    started_at: datetime = field(default_factory=datetime.now)
    finished_at: Optional[datetime] = None
    summary: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    id: Optional[int] = None

    def finish(self, summary: Dict[str, Any]):
        self.status = RunStatus.SUCCEEDED
        self.summary = summary
        self.finished_at = datetime.now()

    def fail(self, error: str):
        self.status = RunStatus.FAILED
        self.error = error
        self.finished_at = datetime.now()


class RunModel(Base):
    """运行记录数据库模型"""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    config_hash = Column(String(64), nullable=False, index=True)
    out_dir = Column(String(500), nullable=False)
    status = Column(SQLEnum(RunStatus), default=RunStatus.RUNNING)
    started_at = Column(DateTime, default=datetime.now)
    finished_at = Column(DateTime, nullable=True)
    summary = Column(Text, default="{}")  # JSON
    error = Column(String(1000), nullable=True)

    def to_domain(self) -> RunEntry:
        """转换为领域模型"""
        return RunEntry(
            id=self.id,
            config_hash=self.config_hash,
            out_dir=self.out_dir,
            status=self.status,
            started_at=self.started_at,
            finished_at=self.finished_at,
            summary=json.loads(self.summary) if self.summary else {},
            error=self.error,
        )

    @staticmethod
    def from_domain(entry: RunEntry) -> "RunModel":
        """从领域模型创建"""
        return RunModel(
            id=entry.id,
            config_hash=entry.config_hash,
            out_dir=entry.out_dir,
            status=entry.status,
            started_at=entry.started_at,
            finished_at=entry.finished_at,
            summary=json.dumps(entry.summary, sort_keys=True),
            error=entry.error,
        )


class RunRepository:
    """运行记录仓储"""

    def __init__(self, db_path: str = "geoweak_runs.db"):
        """
        Args:
            db_path: 数据库文件路径
        """
        Path(db_path).expanduser().parent.mkdir(parents=True, exist_ok=True)
        self.engine = create_engine(f"sqlite:///{Path(db_path).expanduser()}")
        Base.metadata.create_all(self.engine)
        self.SessionLocal = sessionmaker(bind=self.engine)

    def _get_session(self) -> Session:
        return self.SessionLocal()

    def save(self, entry: RunEntry) -> RunEntry:
        """新建或更新记录"""
        session = self._get_session()
        try:
            db_run = None
            if entry.id is not None:
                db_run = session.query(RunModel).filter(RunModel.id == entry.id).first()
            if db_run is None:
                db_run = RunModel.from_domain(entry)
                session.add(db_run)
            else:
                db_run.status = entry.status
                db_run.finished_at = entry.finished_at
                db_run.summary = json.dumps(entry.summary, sort_keys=True)
                db_run.error = entry.error
            session.commit()
            session.refresh(db_run)
            entry.id = db_run.id
            return entry
        finally:
            session.close()

    def get_by_id(self, run_id: int) -> Optional[RunEntry]:
        session = self._get_session()
        try:
            db_run = session.query(RunModel).filter(RunModel.id == run_id).first()
            return db_run.to_domain() if db_run else None
        finally:
            session.close()

    def list_all(self, config_hash: Optional[str] = None, limit: Optional[int] = None
                 ) -> List[RunEntry]:
        """按开始时间倒序列出，可按配置哈希过滤"""
        session = self._get_session()
        try:
            query = session.query(RunModel)
            if config_hash:
                query = query.filter(RunModel.config_hash == config_hash)
            query = query.order_by(RunModel.started_at.desc(), RunModel.id.desc())
            if limit:
                query = query.limit(limit)
            return [r.to_domain() for r in query.all()]
        finally:
            session.close()

    def delete(self, run_id: int) -> bool:
        session = self._get_session()
        try:
            db_run = session.query(RunModel).filter(RunModel.id == run_id).first()
            if db_run is None:
                return False
            session.delete(db_run)
            session.commit()
            return True
        finally:
            session.close()

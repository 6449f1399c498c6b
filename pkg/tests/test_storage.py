"""存储层测试"""
from datetime import datetime, timedelta

import pytest

from geoweak.config import Config, set_config
from geoweak.errors import ConfigError
from geoweak.storage.factory import create_repository
from geoweak.storage.repository import RunEntry, RunRepository, RunStatus


@pytest.fixture
def repository(tmp_path):
    """Repository fixture"""
    return RunRepository(db_path=str(tmp_path / "runs.db"))


class TestRunRepository:
    """测试 RunRepository"""

    def test_save_new_entry(self, repository):
        saved = repository.save(RunEntry(config_hash="a" * 64, out_dir="/tmp/out"))

        assert saved.id is not None
        assert saved.status == RunStatus.RUNNING

    def test_finish_updates_entry(self, repository):
        saved = repository.save(RunEntry(config_hash="abc", out_dir="out"))
        saved.finish({"wssod-with-pseudo": {"10pct": {"0.5": 0.9}}})
        repository.save(saved)

        retrieved = repository.get_by_id(saved.id)
        assert retrieved.status == RunStatus.SUCCEEDED
        assert retrieved.summary == {"wssod-with-pseudo": {"10pct": {"0.5": 0.9}}}
        assert retrieved.finished_at is not None

    def test_fail_records_error(self, repository):
        saved = repository.save(RunEntry(config_hash="abc", out_dir="out"))
        saved.fail("[ingest] 文件不存在")
        repository.save(saved)

        retrieved = repository.get_by_id(saved.id)
        assert retrieved.status == RunStatus.FAILED
        assert retrieved.error == "[ingest] 文件不存在"

    def test_get_by_id_not_found(self, repository):
        assert repository.get_by_id(999) is None

    def test_list_all_newest_first(self, repository):
        now = datetime.now()
        for i in range(3):
            repository.save(RunEntry(config_hash=f"h{i % 2}", out_dir=f"out{i}",
                                     started_at=now + timedelta(minutes=i)))

        entries = repository.list_all()
        assert [e.out_dir for e in entries] == ["out2", "out1", "out0"]
        assert [e.out_dir for e in repository.list_all(config_hash="h0")] == ["out2", "out0"]
        assert len(repository.list_all(limit=1)) == 1

    def test_delete(self, repository):
        saved = repository.save(RunEntry(config_hash="abc", out_dir="out"))

        assert repository.delete(saved.id)
        assert repository.get_by_id(saved.id) is None
        assert not repository.delete(saved.id)


class TestFactory:
    """测试仓储工厂"""

    def test_sqlite_from_settings(self, tmp_path):
        settings = Config(str(tmp_path / "settings.json"))
        settings.set("storage.sqlite.db_path", str(tmp_path / "nested" / "runs.db"))
        set_config(settings)
        try:
            repository = create_repository()
            repository.save(RunEntry(config_hash="abc", out_dir="out"))
            assert (tmp_path / "nested" / "runs.db").exists()
        finally:
            set_config(None)

    def test_unknown_storage(self, tmp_path):
        settings = Config(str(tmp_path / "settings.json"))
        settings.set("storage.type", "postgres")
        set_config(settings)
        try:
            with pytest.raises(ConfigError):
                create_repository()
        finally:
            set_config(None)

"""日志配置"""
import logging

from rich.console import Console
from rich.logging import RichHandler

_configured = False


def setup_logging(level: str = "INFO", console: Console = None) -> None:
    """为 geoweak 的 logger 挂载 RichHandler（重复调用只调整级别）"""
    global _configured
    logger = logging.getLogger("geoweak")
    logger.setLevel(level.upper())
    if _configured:
        return

    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.propagate = False
    _configured = True

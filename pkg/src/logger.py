from datetime import datetime

from loguru import logger as _logger
from rich.logging import RichHandler

from src.config import PROJECT_ROOT


LOG_DIR = PROJECT_ROOT / "logs"


def define_log_level(print_level="INFO", logfile_level="DEBUG", name: str = None):
    """Reset the sinks: one log file per run, plus a rich terminal handler
    unless ``print_level`` is ``"OFF"``."""
    stamp = datetime.now().strftime("%Y%m%d%H%M%S")
    log_name = f"{name}_{stamp}" if name else stamp
    logfile = LOG_DIR / f"{log_name}.log"

    _logger.remove()
    _logger.add(logfile, level=logfile_level, enqueue=False)

    if print_level != "OFF":
        _logger.add(
            RichHandler(rich_tracebacks=True, markup=False, show_time=False, show_path=False),
            level=print_level,
            format="<level>{message}</level>",
        )

    return _logger


logger = define_log_level(print_level="OFF", name="branchflow")

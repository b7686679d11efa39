"""Logging for the command line.

Standard output carries results, so console records go to stderr in a short
form tagged with the sub-command. With `log_path` set in the session config,
a rotating file also receives timestamped records tagged with the run id.
"""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

CONSOLE_FORMAT = "cadlag-line[%(command)s] %(levelname)s %(name)s: %(message)s"
FILE_FORMAT = "%(asctime)s %(run_id)s %(command)s %(levelname)s %(name)s: %(message)s"
LOG_MAX_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 3


class RunContext(logging.Filter):
    """Stamps every record with the sub-command and run id of this process."""

    def __init__(self, command: str = "", run_id: str = ""):
        super().__init__()
        self.command = command or "-"
        self.run_id = run_id or "-"

    def filter(self, record: logging.LogRecord) -> bool:
        record.command = self.command
        record.run_id = self.run_id
        return True


def setup_logging(config, level=logging.WARNING, command: str = "", run_id: str = ""):
    """Install the stderr handler and, when configured, the rotating file handler.

    Does nothing when the root logger already has handlers.
    """
    root = logging.getLogger()
    if root.handlers:
        return root

    root.setLevel(level)
    context = RunContext(command, run_id)

    console_h = logging.StreamHandler(sys.stderr)
    console_h.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    console_h.addFilter(context)
    root.addHandler(console_h)

    log_path = (getattr(config, "log_path", "") or "").strip()
    if log_path:
        try:
            path = Path(log_path).resolve()
            path.parent.mkdir(parents=True, exist_ok=True)
            file_h = RotatingFileHandler(path, maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUPS,
                                         encoding="utf-8")
        except OSError as e:
            root.warning("LOG_FILE_UNAVAILABLE: %s (%s)", log_path, e)
        else:
            file_h.setFormatter(logging.Formatter(FILE_FORMAT))
            file_h.addFilter(context)
            root.addHandler(file_h)

    return root

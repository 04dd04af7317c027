import logging
import os
from datetime import datetime
from typing import Dict, List, Optional

from .config import CONFIG

FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
CONSOLE_FORMAT = "%(levelname)s: %(message)s"


def _configured(handler: logging.Handler, level: int, fmt: str, datefmt: Optional[str] = None) -> logging.Handler:
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt, datefmt=datefmt))
    return handler


class ExwaveLogger:
    """Run log for simulator commands: everything to a timestamped file, INFO and up to the console."""

    def __init__(self, name: str = "exwave", log_dir: Optional[str] = None, console_level: Optional[str] = None):
        self.name = name
        self.log_dir = log_dir or CONFIG["logging"]["log_dir"]
        self.console_level = logging.getLevelName((console_level or CONFIG["logging"]["console_level"]).upper())
        self.log_file = None
        self.logger = logging.getLogger(self.name)
        self._attach_handlers()

    def _attach_handlers(self):
        os.makedirs(self.log_dir, exist_ok=True)
        self.logger.setLevel(logging.DEBUG)
        self.logger.handlers.clear()
        self.logger.propagate = False

        stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.log_file = os.path.join(self.log_dir, f"exwave_{stamp}.log")
        self.logger.addHandler(
            _configured(logging.FileHandler(self.log_file, encoding="utf-8"), logging.DEBUG, FILE_FORMAT, "%Y-%m-%d %H:%M:%S")
        )
        self.logger.addHandler(_configured(logging.StreamHandler(), self.console_level, CONSOLE_FORMAT))
        self.logger.debug(f"Logging to {self.log_file}")

    def debug(self, message: str):
        """Detail that only reaches the log file at the default levels."""
        self.logger.debug(message)

    def info(self, message: str):
        """Progress line for console and file."""
        self.logger.info(message)

    def warning(self, message: str):
        """Recoverable oddity, e.g. a corrupt cache or dark samples."""
        self.logger.warning(message)

    def error(self, message: str):
        """Failure that ends the current command."""
        self.logger.error(message)

    def _banner(self, title: str):
        """Title framed by rule lines."""
        self.info("=" * 60)
        self.info(title)
        self.info("=" * 60)

    def log_run_start(self, command: str, settings: Dict):
        """Log the start of a command together with its effective settings."""
        self._banner(f"EXWAVE {command.upper()} STARTED")
        for section, values in settings.items():
            self.info(f"[{section}] " + ", ".join(f"{k}={v}" for k, v in values.items()))
        self.info(f"Timestamp: {datetime.now().isoformat()}")

    def log_run_end(self, summary: Dict):
        """Log the closing banner and the run summary, one key per line."""
        self._banner("EXWAVE RUN COMPLETED")
        for key, value in summary.items():
            self.info(f"{key}: {value}")

    def log_epoch(self, row) -> None:
        """Log one metric-history row."""
        norms = ", ".join(f"{g:.3e}" for g in row.grad_norms)
        self.info(
            f"Epoch {row.epoch}: loss={row.train_loss:.5f} "
            f"test_acc={row.test_accuracy:.4f} grad_ratio={row.grad_ratio_median:.3f}"
        )
        self.debug(f"  └─ per-layer grad norms: {norms}")

    def log_ablation(self, rows: List):
        self.info("Ablation results:")
        for row in rows:
            self.info(f"  └─ {row.mode:<14} accuracy={row.accuracy:.4f}")

    def log_grad_check(self, report):
        status = "PASS" if report.passed else "FAIL"
        self.info(
            f"Gradient check {status}: max relative error {report.max_relative_error:.3e} "
            f"at {report.worst_parameter} ({report.checked} parameters)"
        )


# Global logger instance
logger = ExwaveLogger()

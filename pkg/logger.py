import json
import logging
import os
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, List, Optional

from config import LoggingSettings, get_settings


class DustLogger:
    """Structured logging for the segmentation engine.
    Every entry may carry a metadata dict; recent entries stay in memory for reports."""

    def __init__(self, name: str = "Dust", settings: Optional[LoggingSettings] = None):
        self.name = name
        self.settings = settings or get_settings().logging
        self.logs: List[Dict[str, Any]] = []
        self.max_memory_logs = self.settings.max_memory_logs
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        logger = logging.getLogger(self.name)
        logger.setLevel(getattr(logging, self.settings.level.upper(), logging.INFO))

        # Prevent duplicate handlers
        if logger.handlers:
            return logger

        detailed_formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
        )
        simple_formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')

        if self.settings.enable_console:
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(simple_formatter)
            logger.addHandler(console_handler)

        if self.settings.enable_file:
            os.makedirs(self.settings.log_dir, exist_ok=True)
            file_handler = RotatingFileHandler(
                os.path.join(self.settings.log_dir, f"{self.name.lower()}.log"),
                maxBytes=10 * 1024 * 1024,  # 10MB
                backupCount=5
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(detailed_formatter)
            logger.addHandler(file_handler)

            error_handler = RotatingFileHandler(
                os.path.join(self.settings.log_dir, f"{self.name.lower()}_errors.log"),
                maxBytes=5 * 1024 * 1024,
                backupCount=3
            )
            error_handler.setLevel(logging.ERROR)
            error_handler.setFormatter(detailed_formatter)
            logger.addHandler(error_handler)

        return logger

    def log(self, message: str, level: str = "INFO", metadata: Optional[Dict[str, Any]] = None):
        """Log a message with optional metadata"""
        entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": level.upper(),
            "message": message,
            "metadata": metadata or {},
            "component": self.name
        }
        self.logs.append(entry)
        if len(self.logs) > self.max_memory_logs:
            self.logs.pop(0)

        log_level = getattr(logging, level.upper(), logging.INFO)
        if metadata:
            message = f"{message} | Metadata: {json.dumps(metadata, default=str)}"
        self.logger.log(log_level, message)

    def info(self, message: str, metadata: Optional[Dict[str, Any]] = None):
        self.log(message, "INFO", metadata)

    def warning(self, message: str, metadata: Optional[Dict[str, Any]] = None):
        self.log(message, "WARNING", metadata)

    def error(self, message: str, metadata: Optional[Dict[str, Any]] = None):
        self.log(message, "ERROR", metadata)

    def debug(self, message: str, metadata: Optional[Dict[str, Any]] = None):
        self.log(message, "DEBUG", metadata)

    def log_performance(self, operation: str, duration: float, metadata: Optional[Dict[str, Any]] = None):
        """Log a timing measurement"""
        perf_metadata = {"operation": operation, "duration_seconds": duration}
        if metadata:
            perf_metadata.update(metadata)
        self.info(f"Performance: {operation} completed in {duration:.3f}s", perf_metadata)

    def log_error_with_context(self, error: Exception, context: Dict[str, Any]):
        self.error(f"Error occurred: {error}", {
            "error_type": type(error).__name__,
            "error_message": str(error),
            "context": context
        })

    def get_recent_logs(self, limit: int = 50, level: Optional[str] = None) -> List[Dict[str, Any]]:
        logs = self.logs
        if level:
            logs = [entry for entry in logs if entry["level"] == level.upper()]
        return list(logs[-limit:]) if limit else list(logs)

    def get_log_summary(self) -> Dict[str, Any]:
        if not self.logs:
            return {"total_logs": 0}

        level_counts: Dict[str, int] = {}
        for entry in self.logs:
            level_counts[entry["level"]] = level_counts.get(entry["level"], 0) + 1

        return {
            "total_logs": len(self.logs),
            "by_level": level_counts,
            "oldest_log": self.logs[0]["timestamp"],
            "newest_log": self.logs[-1]["timestamp"],
            "memory_usage": f"{len(self.logs)}/{self.max_memory_logs}"
        }

    def clear_logs(self):
        self.logs.clear()


dust_logger = DustLogger("Dust")


def log_info(message: str, metadata: Optional[Dict[str, Any]] = None):
    dust_logger.info(message, metadata)


def log_warning(message: str, metadata: Optional[Dict[str, Any]] = None):
    dust_logger.warning(message, metadata)

"""Logging for lorenz-shadow runs."""

import contextlib
import contextvars
import functools
import logging
import logging.handlers
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, Optional, Type, TypeVar

from config.settings import Config

F = TypeVar("F", bound=Callable[..., Any])

_RUN_FIELDS: "contextvars.ContextVar[Dict[str, Any]]" = contextvars.ContextVar("run_fields", default={})


class RunContextFilter(logging.Filter):
    """Adds a `run` attribute (e.g. "eps=0.64 seed=3 mode=noise") to every record."""

    def filter(self, record: logging.LogRecord) -> bool:
        fields = _RUN_FIELDS.get()
        record.run = " ".join(f"{k}={v}" for k, v in fields.items()) or "-"
        return True


@contextlib.contextmanager
def run_context(**fields: Any) -> Iterator[Dict[str, Any]]:
    """Tag log records emitted inside the block with the given run fields."""
    merged = {**_RUN_FIELDS.get(), **fields}
    token = _RUN_FIELDS.set(merged)
    try:
        yield merged
    finally:
        _RUN_FIELDS.reset(token)


def _rotating(path: Path, level: int, max_mb: int, backups: int,
              formatter: logging.Formatter) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(
        filename=path, maxBytes=max_mb * 1024 * 1024, backupCount=backups, encoding='utf-8'
    )
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logging(config: Type[Config], log_name: str = "lorenz_shadow") -> logging.Logger:
    """
    Configure the package logger from a Config class.

    Console records go to stderr (warnings only unless DEBUG) so that stdout
    carries command output alone. `<log_name>.log` keeps every record and
    `<log_name>_errors.log` errors only; both rotate.
    """
    logs_dir = Path(config.LOGS_DIR)
    logs_dir.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(log_name)
    logger.setLevel(getattr(logging, config.LOG_LEVEL.upper()))
    logger.handlers.clear()

    detailed = logging.Formatter(fmt=config.LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.DEBUG if config.DEBUG else logging.WARNING)
    console.setFormatter(detailed if config.DEBUG else logging.Formatter('%(levelname)s: %(message)s'))

    context = RunContextFilter()
    for handler in (
        console,
        _rotating(logs_dir / f"{log_name}.log", logging.DEBUG, 10, 5, detailed),
        _rotating(logs_dir / f"{log_name}_errors.log", logging.ERROR, 5, 3, detailed),
    ):
        handler.addFilter(context)
        logger.addHandler(handler)
    return logger


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(f"lorenz_shadow.{name}")


class LogOperation:
    """Times a block and logs "Starting", "Completed ... in" or "Failed ... after"."""

    def __init__(self, logger: logging.Logger, operation: str, level: int = logging.INFO, **fields: Any):
        self.logger = logger
        self.operation = operation
        self.level = level
        self.fields = fields
        self.duration = 0.0
        self._started: Optional[float] = None
        self._context: Optional[contextlib.ExitStack] = None

    def __enter__(self) -> "LogOperation":
        self._context = contextlib.ExitStack()
        self._context.enter_context(run_context(**self.fields))
        self._started = time.perf_counter()
        self.logger.log(self.level, f"Starting {self.operation}")
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> bool:
        self.duration = time.perf_counter() - (self._started or 0.0)
        if exc_type is None:
            self.logger.log(self.level, f"Completed {self.operation} in {self.duration:.2f}s")
        else:
            self.logger.error(f"Failed {self.operation} after {self.duration:.2f}s: {exc_val}")
        if self._context is not None:
            self._context.close()
        return False


def log_exceptions(logger: logging.Logger) -> Callable[[F], F]:
    """Log the traceback of anything the wrapped function raises, then re-raise."""
    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            try:
                return func(*args, **kwargs)
            except Exception as e:
                logger.exception(f"Exception in {func.__name__}: {e}")
                raise
        return wrapper  # type: ignore[return-value]
    return decorator


def log_performance(logger: logging.Logger, threshold_seconds: float = 1.0) -> Callable[[F], F]:
    """Warn when a call runs longer than threshold_seconds; failures log their elapsed time."""
    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception:
                logger.error(f"{func.__name__} failed after {time.perf_counter() - started:.2f}s")
                raise
            elapsed = time.perf_counter() - started
            if elapsed > threshold_seconds:
                logger.warning(f"{func.__name__} took {elapsed:.2f}s (threshold: {threshold_seconds}s)")
            return result
        return wrapper  # type: ignore[return-value]
    return decorator

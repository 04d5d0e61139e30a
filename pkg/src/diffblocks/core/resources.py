"""Wall-time and memory budgets for runs and self-test suites."""

import time
from collections.abc import Iterator
from contextlib import contextmanager

import psutil

from .errors import ResourceError
from .logging import get_logger
from .schema import ResourceLimits

logger = get_logger(__name__)


class ResourceTracker:
    """Tracks and enforces resource usage limits."""

    def __init__(self, limits: ResourceLimits | None = None) -> None:
        self.limits = limits or ResourceLimits()
        self._usage: dict[str, float] = {
            "memory_mb": 0.0,
            "execution_time": 0.0,
        }
        self._start_time: float | None = None

    def _check_memory_usage(self) -> None:
        """Check current memory usage against limits.

        Raises:
            ResourceError: If memory limit is exceeded
        """
        process = psutil.Process()
        memory_mb = process.memory_info().rss / (1024 * 1024)
        self._usage["memory_mb"] = max(self._usage["memory_mb"], memory_mb)

        if memory_mb > self.limits.memory_mb:
            raise ResourceError(
                f"Memory limit exceeded: {memory_mb:.1f}MB > {self.limits.memory_mb}MB",
                "memory",
            )

    def _check_timeout(self) -> None:
        """Check if execution time exceeds timeout.

        Raises:
            ResourceError: If timeout is exceeded
        """
        if self._start_time is None:
            return

        execution_time = time.perf_counter() - self._start_time
        self._usage["execution_time"] = execution_time

        if execution_time > self.limits.timeout_sec:
            raise ResourceError(
                f"Timeout exceeded: {execution_time:.1f}s > {self.limits.timeout_sec}s",
                "timeout",
            )

    @contextmanager
    def track_resources(self, label: str = "run") -> Iterator[None]:
        """Measure the enclosed block and check it against the limits.

        The block is not interrupted; an overrun is reported when it ends.

        Raises:
            ResourceError: If any resource limit is exceeded
        """
        self._start_time = time.perf_counter()
        self._check_memory_usage()
        try:
            yield
            self._check_memory_usage()
            self._check_timeout()
        finally:
            logger.debug("Resource usage", extra={"label": label, **self._usage})
            self._start_time = None

    def get_usage(self) -> dict[str, float]:
        """Get current resource usage statistics."""
        return self._usage.copy()

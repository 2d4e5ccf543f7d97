import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List

import numpy as np
import psutil

logger = logging.getLogger(__name__)


class StageTimer:
    """Named stage durations in milliseconds, measured on the monotonic clock"""

    def __init__(self):
        self.stages: Dict[str, float] = {}
        self._start = time.perf_counter()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed_ms = (time.perf_counter() - start) * 1000.0
            self.stages[name] = self.stages.get(name, 0.0) + elapsed_ms
            logger.debug(f"stage '{name}' took {elapsed_ms:.3f}ms")

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self._start) * 1000.0

    def get(self, name: str) -> float:
        return self.stages.get(name, 0.0)

    def total_ms(self) -> float:
        return sum(self.stages.values())


@dataclass(frozen=True)
class OperationSample:
    duration_ms: float
    rss_delta_bytes: int
    peak_rss_bytes: int
    timestamp: float


class PerformanceMonitor:
    """Per-operation wall time and process RSS, safe to share across sweep threads.

    RSS is process-wide, so deltas of operations running concurrently overlap;
    treat them as an upper bound.
    """

    def __init__(self):
        self.samples: Dict[str, List[OperationSample]] = {}
        self._lock = threading.Lock()
        self._process = psutil.Process()

    @contextmanager
    def monitor_operation(self, operation_name: str, label: str = ''):
        start_rss = self._process.memory_info().rss
        start = time.perf_counter()
        try:
            yield
        finally:
            duration_ms = (time.perf_counter() - start) * 1000.0
            end_rss = self._process.memory_info().rss
            sample = OperationSample(duration_ms, end_rss - start_rss, max(start_rss, end_rss), time.time())
            with self._lock:
                self.samples.setdefault(operation_name, []).append(sample)
            logger.info(f"{operation_name} {label}".rstrip() + f" took {duration_ms:.1f}ms, "
                        f"rss delta {sample.rss_delta_bytes / 1024 / 1024:.2f}MB")

    def get_performance_summary(self) -> Dict[str, Dict[str, Any]]:
        """count, mean/p50/p95/max duration (ms) and RSS figures per operation"""
        with self._lock:
            snapshot = {name: list(samples) for name, samples in self.samples.items() if samples}

        summary = {}
        for name, samples in snapshot.items():
            durations = np.array([s.duration_ms for s in samples])
            deltas = np.array([s.rss_delta_bytes for s in samples])
            summary[name] = {
                'count': len(samples),
                'mean_ms': float(durations.mean()),
                'p50_ms': float(np.percentile(durations, 50)),
                'p95_ms': float(np.percentile(durations, 95)),
                'max_ms': float(durations.max()),
                'max_rss_delta_mb': float(deltas.max()) / 1024 / 1024,
                'peak_rss_mb': max(s.peak_rss_bytes for s in samples) / 1024 / 1024,
            }
        return summary

    def reset(self):
        with self._lock:
            self.samples = {}

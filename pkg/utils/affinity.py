"""
Affinity backends for live mode
A backend receives each non-empty MigrationPlan the mapper decides on. The
logging backend only reports intended moves; the psutil backend pins the
named OS threads to CPUs.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import psutil

from model.mapper import MigrationPlan

logger = logging.getLogger(__name__)


class AffinityBackend:
    """Receives migration plans; subclasses decide what applying one means."""

    def pin(self, thread_id: int, core_id: int):
        raise NotImplementedError

    def apply(self, plan: MigrationPlan, now_ms: float):
        for move in plan:
            self.pin(move.thread_id, move.to_core_id)
            if move.displaced_thread_id is not None:
                self.pin(move.displaced_thread_id, move.displaced_to_core_id)


class LoggingAffinityBackend(AffinityBackend):
    """Logs intended migrations and remembers them for the session report."""

    def __init__(self):
        self.applied: List[Tuple[float, int, int]] = []
        self._now_ms = 0.0

    def apply(self, plan: MigrationPlan, now_ms: float):
        self._now_ms = now_ms
        logger.info(f"Plan at {now_ms:.0f} ms: {len(plan)} move(s)")
        super().apply(plan, now_ms)

    def pin(self, thread_id: int, core_id: int):
        logger.info(f"  thread {thread_id} -> core {core_id}")
        self.applied.append((self._now_ms, thread_id, core_id))


class PsutilAffinityBackend(LoggingAffinityBackend):
    """
    Pins OS threads with psutil

    Args:
        cpus: OS CPU number for each mapper core id; identity when omitted
    """

    def __init__(self, cpus: Optional[Sequence[int]] = None):
        super().__init__()
        self.cpus = list(cpus) if cpus is not None else None

    def cpu_of(self, core_id: int) -> int:
        if self.cpus is None:
            return core_id
        return self.cpus[core_id]

    def pin(self, thread_id: int, core_id: int):
        super().pin(thread_id, core_id)
        cpu = self.cpu_of(core_id)
        try:
            psutil.Process(thread_id).cpu_affinity([cpu])
        except (psutil.NoSuchProcess, psutil.AccessDenied, ValueError) as e:
            logger.error(f"Cannot pin thread {thread_id} to CPU {cpu}: {e}")


def make_backend(kind: str = "log", cpus: Optional[Sequence[int]] = None) -> AffinityBackend:
    if kind == "log":
        return LoggingAffinityBackend()
    if kind == "psutil":
        return PsutilAffinityBackend(cpus)
    raise ValueError(f"unknown affinity backend '{kind}' (expected log or psutil)")

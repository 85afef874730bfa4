"""
Live mapper session
Drives the Hurry-up mapper from a real stats pipe: a reader thread frames
events off the channel into a queue, and the mapper loop ingests them and
decides migrations once per sampling window until the producer closes.
"""

import logging
import queue
import threading
import time
from collections import deque
from dataclasses import replace
from typing import BinaryIO, Callable, Deque, Dict, List, Optional, Set

from model.domain import CoreType, MapperConfig, Policy, Topology
from model.mapper import (
    CoreOccupancy,
    DuplicateActiveThread,
    MapperState,
    MigrationPlan,
    ingest_event,
    mapper_step,
)
from model.metrics import Report, session_report
from utils.affinity import AffinityBackend, LoggingAffinityBackend
from utils.statsproto import KEEP_REJECTED_LINES, ChannelClosed, StatsChannel, StatsEvent

logger = logging.getLogger(__name__)

_CLOSED = object()


def wall_clock_ms() -> float:
    return time.time() * 1000.0


class LiveSession:
    """
    One mapper session over one stats channel

    Args:
        stream: readable byte stream carrying the stats wire format
        topology: platform the OS threads are mapped onto
        mapper_config: sampling window and migration threshold
        backend: receives every non-empty plan; logs by default
        clock: millisecond clock on the same epoch as the stream timestamps;
            None follows the latest event timestamp instead (replaying recorded streams)
    """

    def __init__(self, stream: BinaryIO, topology: Topology = Topology(),
                 mapper_config: MapperConfig = MapperConfig(),
                 backend: Optional[AffinityBackend] = None,
                 clock: Optional[Callable[[], float]] = wall_clock_ms):
        self.channel = StatsChannel(stream)
        self.topology = topology
        self.backend = backend or LoggingAffinityBackend()
        self.clock = clock
        self.state = MapperState(topology, mapper_config, CoreOccupancy.from_assignment({}, topology),
                                 Policy.HURRY_UP)
        self.inbox: "queue.Queue" = queue.Queue()

        self.latencies: List[float] = []
        self.core_types: List[CoreType] = []
        self.rejected: Deque[DuplicateActiveThread] = deque(maxlen=KEEP_REJECTED_LINES)
        self.rejected_count = 0
        self.skipped_threads: Set[int] = set()
        self.windows = 0
        self.migration_count = 0
        self.reader_error: Optional[BaseException] = None
        self._stream_now: Optional[float] = None
        self._first_ts: Optional[float] = None
        self._last_ts: Optional[float] = None

    # Reader side

    def _read_loop(self):
        try:
            while True:
                events = self.channel.read_available()
                if events:
                    self.inbox.put(events)
        except ChannelClosed:
            logger.info("Stats producer closed the channel")
        except Exception as e:
            logger.error(f"Stats reader failed: {e}")
            self.reader_error = e
        finally:
            self.inbox.put(_CLOSED)

    # Mapper side

    def now_ms(self) -> Optional[float]:
        if self.clock is None:
            return self._stream_now
        return self.clock()

    def _place(self, thread_id: int) -> bool:
        """Map a newly seen thread onto the next free core in id order."""
        occupancy = self.state.occupancy
        if occupancy.running_core(thread_id) is not None:
            return True
        if thread_id in self.skipped_threads:
            return False
        for core_id in self.topology.core_ids:
            if occupancy.running_thread(core_id) is None:
                self.state = replace(self.state, occupancy=occupancy.with_thread(thread_id, core_id))
                logger.debug(f"Thread {thread_id} mapped to core {core_id}")
                return True
        logger.warning(f"Thread {thread_id} does not fit {self.topology.label}; skipping its events")
        self.skipped_threads.add(thread_id)
        return False

    def observe(self, events: List[StatsEvent]):
        """Ingest a batch of events in arrival order, recording completed latencies."""
        table = self.state.table
        for event in events:
            if not self._place(event.thread_id):
                continue
            if self._first_ts is None:
                self._first_ts = event.timestamp_ms
                if self.clock is None:
                    self.state = replace(self.state, start_sampling_ms=float(event.timestamp_ms))
            self._last_ts = event.timestamp_ms
            if self._stream_now is None or event.timestamp_ms > self._stream_now:
                self._stream_now = float(event.timestamp_ms)

            begun = table.get(event.request_id)
            try:
                table = ingest_event(table, event)
            except DuplicateActiveThread as e:
                logger.warning(f"Rejected stats event: {e}")
                self.rejected.append(e)
                self.rejected_count += 1
                continue
            if begun is not None:
                self.latencies.append(event.timestamp_ms - begun.start_timestamp_ms)
                core_id = self.state.occupancy.running_core(event.thread_id)
                self.core_types.append(self.topology.core_type(core_id))
        self.state = replace(self.state, table=table)

    def tick(self, now_ms: float) -> Optional[MigrationPlan]:
        """Run the mapper's window check at `now_ms`; applies any plan it returns."""
        outcome = mapper_step(self.state, [], now_ms)
        self.state = outcome.state
        if outcome.plan is None:
            return None
        self.windows += 1
        logger.debug(f"Window {self.windows} at {now_ms:.0f} ms: {len(self.state.table)} in flight")
        if not outcome.plan.is_empty:
            self.backend.apply(outcome.plan, now_ms)
            self.migration_count += sum(1 + (m.displaced_thread_id is not None) for m in outcome.plan)
        return outcome.plan

    def _timeout_s(self) -> Optional[float]:
        if self.clock is None:
            return None
        deadline = self.state.start_sampling_ms + self.state.config.sampling_time_ms
        return max(0.0, (deadline - self.clock()) / 1000.0)

    def run(self) -> Report:
        """Consume the channel until the producer closes it; returns the session report."""
        reader = threading.Thread(target=self._read_loop, name="stats-reader", daemon=True)
        if self.clock is not None:
            self.state = replace(self.state, start_sampling_ms=self.clock())
        reader.start()

        while True:
            try:
                item = self.inbox.get(timeout=self._timeout_s())
            except queue.Empty:
                item = None
            if item is _CLOSED:
                break
            if item:
                self.observe(item)
            now = self.now_ms()
            if now is not None:
                self.tick(now)

        reader.join()
        return self.report()

    def report(self) -> Report:
        elapsed_s = 0.0
        if self._first_ts is not None and self._last_ts is not None:
            elapsed_s = (self._last_ts - self._first_ts) / 1000.0
        return session_report(
            self.latencies,
            in_flight=len(self.state.table),
            migration_count=self.migration_count,
            core_types=self.core_types,
            elapsed_s=elapsed_s,
        )

    @property
    def in_flight(self) -> Dict[str, int]:
        return {rid: record.thread_id for rid, record in self.state.table}

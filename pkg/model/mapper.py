"""
Hurry-up Mapper
Policy engine that watches request begin/end events, keeps the table of
in-flight requests, and every sampling window moves the longest-running
little-core threads onto big cores (swapping out whatever ran there).
Also provides the static random baseline, which maps once and never migrates.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from model.domain import CoreType, MapperConfig, Policy, Topology
from utils.statsproto import StatsEvent

logger = logging.getLogger(__name__)


class DuplicateActiveThread(ValueError):
    """A begin event names a thread that is still serving another request."""

    def __init__(self, event: StatsEvent, active_request_id: str):
        super().__init__(
            f"thread {event.thread_id} began request {event.request_id!r} "
            f"while {active_request_id!r} is still active"
        )
        self.event = event
        self.active_request_id = active_request_id


class PoolExceedsCores(ValueError):
    """The thread pool is larger than the number of cores it must be mapped to."""


@dataclass(frozen=True)
class RequestRecord:
    thread_id: int
    start_timestamp_ms: float


@dataclass(frozen=True)
class RequestTable:
    """In-flight requests keyed by request id; one active request per thread."""

    records: Dict[str, RequestRecord] = field(default_factory=dict)

    def __contains__(self, request_id: str) -> bool:
        return request_id in self.records

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Tuple[str, RequestRecord]]:
        return iter(self.records.items())

    def get(self, request_id: str) -> Optional[RequestRecord]:
        return self.records.get(request_id)

    def request_of_thread(self, thread_id: int) -> Optional[str]:
        for request_id, record in self.records.items():
            if record.thread_id == thread_id:
                return request_id
        return None


@dataclass(frozen=True)
class CoreOccupancy:
    """Which thread each core runs, and the inverse map."""

    core_to_thread: Dict[int, Optional[int]]
    thread_to_core: Dict[int, int]

    @classmethod
    def from_assignment(cls, assignment: Dict[int, int], topology: Topology) -> "CoreOccupancy":
        core_to_thread: Dict[int, Optional[int]] = {core: None for core in topology.core_ids}
        for thread_id, core_id in assignment.items():
            if core_to_thread.get(core_id) is not None:
                raise ValueError(f"core {core_id} assigned to threads {core_to_thread[core_id]} and {thread_id}")
            core_to_thread[core_id] = thread_id
        return cls(core_to_thread, dict(assignment))

    def running_thread(self, core_id: int) -> Optional[int]:
        return self.core_to_thread.get(core_id)

    def running_core(self, thread_id: int) -> Optional[int]:
        return self.thread_to_core.get(thread_id)

    def with_thread(self, thread_id: int, core_id: int) -> "CoreOccupancy":
        """Place a not-yet-mapped thread on an empty core."""
        if thread_id in self.thread_to_core:
            raise ValueError(f"thread {thread_id} is already mapped to core {self.thread_to_core[thread_id]}")
        if self.core_to_thread.get(core_id) is not None:
            raise ValueError(f"core {core_id} already runs thread {self.core_to_thread[core_id]}")
        core_to_thread = dict(self.core_to_thread)
        core_to_thread[core_id] = thread_id
        thread_to_core = dict(self.thread_to_core)
        thread_to_core[thread_id] = core_id
        return CoreOccupancy(core_to_thread, thread_to_core)


@dataclass(frozen=True)
class Move:
    thread_id: int
    to_core_id: int
    displaced_thread_id: Optional[int] = None
    displaced_to_core_id: Optional[int] = None


@dataclass(frozen=True)
class MigrationPlan:
    moves: Tuple[Move, ...] = ()

    def __len__(self) -> int:
        return len(self.moves)

    def __iter__(self) -> Iterator[Move]:
        return iter(self.moves)

    @property
    def is_empty(self) -> bool:
        return not self.moves


def ingest_event(table: RequestTable, event: StatsEvent) -> RequestTable:
    """
    Apply one stats event: a known request id ends the request, an unknown one begins it

    Raises:
        DuplicateActiveThread: begin event for a thread that already has an active request
    """
    records = dict(table.records)
    if event.request_id in records:
        del records[event.request_id]
        return RequestTable(records)

    active = table.request_of_thread(event.thread_id)
    if active is not None:
        raise DuplicateActiveThread(event, active)
    records[event.request_id] = RequestRecord(event.thread_id, event.timestamp_ms)
    return RequestTable(records)


def select_migrations(table: RequestTable, occupancy: CoreOccupancy, topology: Topology,
                      now_ms: float, cfg: MapperConfig) -> MigrationPlan:
    """
    Pick the little-core threads to hurry onto big cores

    Threads on a little core whose request has run strictly longer than the
    migration threshold are taken longest-first (ties: lower thread id) and paired
    with big cores in core-id order. An occupied big core hands its thread to the
    vacated little core; an idle big core gives a plain move.
    """
    threads_on_little: List[Tuple[float, int]] = []
    for _, record in table:
        elapsed = now_ms - record.start_timestamp_ms
        if not elapsed > cfg.migration_threshold_ms:
            continue
        core_id = occupancy.running_core(record.thread_id)
        if core_id is None:
            continue
        if topology.core_type(core_id) is CoreType.LITTLE:
            threads_on_little.append((elapsed, record.thread_id))

    threads_on_little.sort(key=lambda pair: (-pair[0], pair[1]))

    moves = []
    for b, big_core in enumerate(topology.big_core_ids):
        if b >= len(threads_on_little):
            break
        thread_on_big = occupancy.running_thread(big_core)
        thread_id = threads_on_little[b][1]
        little_core = occupancy.running_core(thread_id)
        if thread_on_big is None:
            moves.append(Move(thread_id, big_core))
        else:
            moves.append(Move(thread_id, big_core, thread_on_big, little_core))
    return MigrationPlan(tuple(moves))


def apply_plan(occupancy: CoreOccupancy, plan: MigrationPlan) -> CoreOccupancy:
    core_to_thread = dict(occupancy.core_to_thread)
    thread_to_core = dict(occupancy.thread_to_core)
    for move in plan:
        vacated = thread_to_core[move.thread_id]
        core_to_thread[vacated] = None
        core_to_thread[move.to_core_id] = move.thread_id
        thread_to_core[move.thread_id] = move.to_core_id
        if move.displaced_thread_id is not None:
            core_to_thread[move.displaced_to_core_id] = move.displaced_thread_id
            thread_to_core[move.displaced_thread_id] = move.displaced_to_core_id
    return CoreOccupancy(core_to_thread, thread_to_core)


def initial_mapping(pool_size: int, topology: Topology, policy: Policy,
                    rng: np.random.Generator) -> CoreOccupancy:
    """
    Map the search thread pool onto cores before any request arrives

    Hurry-up walks core ids round-robin; the static baseline draws a distinct
    random core per thread and keeps it for the whole run.

    Raises:
        PoolExceedsCores: more pool threads than cores
    """
    if pool_size > topology.core_count:
        raise PoolExceedsCores(f"pool of {pool_size} threads does not fit {topology.core_count} cores")

    if policy is Policy.STATIC_RANDOM:
        cores = rng.choice(np.asarray(topology.core_ids), size=pool_size, replace=False)
        assignment = {thread_id: int(core) for thread_id, core in enumerate(cores)}
    else:
        assignment = {thread_id: thread_id % topology.core_count for thread_id in range(pool_size)}
    return CoreOccupancy.from_assignment(assignment, topology)


@dataclass(frozen=True)
class MapperState:
    topology: Topology
    config: MapperConfig
    occupancy: CoreOccupancy
    policy: Policy = Policy.HURRY_UP
    table: RequestTable = field(default_factory=RequestTable)
    start_sampling_ms: float = 0.0


class StepOutcome(NamedTuple):
    state: MapperState
    plan: Optional[MigrationPlan]
    rejected: List[DuplicateActiveThread]


def mapper_step(state: MapperState, events: Sequence[StatsEvent], now_ms: float) -> StepOutcome:
    """
    Ingest a batch of events and, once the sampling window has elapsed, decide migrations

    Rejected events are reported in the outcome and do not stop the batch. The
    static baseline ingests events but never plans.
    """
    table = state.table
    rejected = []
    for event in events:
        try:
            table = ingest_event(table, event)
        except DuplicateActiveThread as e:
            logger.warning(f"Rejected stats event: {e}")
            rejected.append(e)

    state = replace(state, table=table)
    if state.policy is Policy.STATIC_RANDOM:
        return StepOutcome(state, None, rejected)
    if now_ms - state.start_sampling_ms < state.config.sampling_time_ms:
        return StepOutcome(state, None, rejected)

    plan = select_migrations(table, state.occupancy, state.topology, now_ms, state.config)
    if plan.moves:
        logger.debug(f"Window at {now_ms:.1f} ms: {len(plan)} migration(s) {plan.moves}")
    state = replace(state, occupancy=apply_plan(state.occupancy, plan), start_sampling_ms=now_ms)
    return StepOutcome(state, plan, rejected)

"""
Discrete-event simulator of a big/little search server
Open-loop arrivals feed a FIFO queue in front of a fixed thread pool; each
thread progresses its request at the speed of the core it currently sits on,
the mapper migrates threads at sampling boundaries, and per-cluster power is
integrated into energy as the run goes.
"""

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Any, Deque, Dict, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import nnls

from model.domain import (
    ConfigInvalid,
    CoreType,
    Policy,
    PowerModel,
    ServiceModel,
    SimConfig,
    Topology,
    validate_config,
)
from model.mapper import MapperState, initial_mapping, mapper_step
from utils.statsproto import StatsEvent

logger = logging.getLogger(__name__)

WORK_TOLERANCE = 1e-9


class SimulationInvariantError(RuntimeError):
    """The engine broke one of its own conservation laws."""


# Service time model

def base_service_time(keywords: int, core_type: CoreType, model: ServiceModel) -> float:
    return model.fixed_overhead_ms + keywords * model.ms_per_keyword(core_type)


def noise_factor(noise_cv: float, rng: np.random.Generator) -> float:
    """Multiplicative log-normal noise with mean 1 and the given coefficient of variation."""
    if noise_cv == 0:
        return 1.0
    sigma = math.sqrt(math.log1p(noise_cv ** 2))
    return float(rng.lognormal(-sigma ** 2 / 2, sigma))


def service_time(keywords: int, core_type: CoreType, model: ServiceModel,
                 rng: np.random.Generator) -> float:
    if keywords < 1:
        raise ValueError(f"a query has at least one keyword, got {keywords}")
    return base_service_time(keywords, core_type, model) * noise_factor(model.noise_cv, rng)


# Power model

class EnergySplit(NamedTuple):
    big_j: float
    little_j: float
    rest_j: float

    @property
    def total_j(self) -> float:
        return self.big_j + self.little_j + self.rest_j


def cluster_power(power_model: PowerModel, topology: Topology, active_cores: Set[int]) -> Tuple[float, float, float]:
    """Instantaneous (big, little, rest) watts for a set of busy cores."""
    big_w = sum(power_model.core_watts(CoreType.BIG, core in active_cores) for core in topology.big_core_ids)
    little_w = sum(power_model.core_watts(CoreType.LITTLE, core in active_cores) for core in topology.little_core_ids)
    return big_w, little_w, power_model.rest_of_system_w


def integrate_power(interval_ms: float, power_model: PowerModel, topology: Topology,
                    active_cores: Set[int]) -> EnergySplit:
    """Joules spent over an interval of constant per-core activity."""
    seconds = interval_ms / 1000.0
    big_w, little_w, rest_w = cluster_power(power_model, topology, active_cores)
    return EnergySplit(big_w * seconds, little_w * seconds, rest_w * seconds)


# Normalised socket power of 1-L, 2-L, 1-B and 2-B configurations relative to 1-L
SOCKET_POWER_RATIOS: Dict[Tuple[int, int], float] = {
    (0, 1): 1.0,
    (0, 2): 1.5,
    (1, 0): 7.8,
    (2, 0): 12.9,
}


def fit_power_model(ratios: Mapping[Tuple[int, int], float] = SOCKET_POWER_RATIOS,
                    topology: Topology = Topology(),
                    big_active_w: float = 0.76,
                    rest_of_system_w: float = 0.76,
                    little_efficiency: float = 2.3,
                    speedup: float = ServiceModel().speedup) -> PowerModel:
    """
    Calibrate idle watts against normalised socket powers

    Active watts come from the anchors: the big core at full load draws
    `big_active_w`, and a little core is `little_efficiency` times more
    performance-per-watt efficient while being `speedup` times slower. Idle watts
    are the non-negative least-squares fit of the relative error of each
    (big busy, little busy) configuration's socket power against its ratio to
    the single-little-core configuration. The other cores of the platform idle.

    Returns:
        PowerModel with the fitted idle watts
    """
    little_active_w = big_active_w / (little_efficiency * speedup)

    def socket(config: Tuple[int, int]) -> Tuple[float, np.ndarray]:
        busy_big, busy_little = config
        constant = busy_big * big_active_w + busy_little * little_active_w
        idle = np.array([topology.little_cores - busy_little, topology.big_cores - busy_big], dtype=float)
        return constant, idle

    reference = min(ratios, key=lambda cfg: ratios[cfg])
    ref_const, ref_idle = socket(reference)
    ref_ratio = ratios[reference]

    rows, targets = [], []
    for config, ratio in ratios.items():
        if config == reference:
            continue
        const, idle = socket(config)
        scale = ratio / ref_ratio
        rows.append((idle - scale * ref_idle) / scale)
        targets.append(-(const - scale * ref_const) / scale)

    (little_idle_w, big_idle_w), residual = nnls(np.array(rows), np.array(targets))
    logger.debug(f"Power fit residual {residual:.6f}")
    return PowerModel(
        big_active_w=big_active_w,
        big_idle_w=float(big_idle_w),
        little_active_w=little_active_w,
        little_idle_w=float(little_idle_w),
        rest_of_system_w=rest_of_system_w,
    )


# Engine state

@dataclass
class Dwell:
    core_id: int
    core_type: CoreType
    duration_ms: float


@dataclass
class Request:
    request_id: str
    keywords: int
    arrival_ms: float
    work_units: float
    start_service_ms: Optional[float] = None
    completion_ms: Optional[float] = None
    noise: float = 1.0
    migrations: int = 0
    work_processed: float = 0.0
    final_core_type: Optional[CoreType] = None
    dwell: List[Dwell] = field(default_factory=list)

    @property
    def latency_ms(self) -> Optional[float]:
        if self.completion_ms is None:
            return None
        return self.completion_ms - self.arrival_ms

    def service_ms(self, core_type: CoreType, model: ServiceModel) -> float:
        return base_service_time(self.keywords, core_type, model) * self.noise

    def rate(self, core_type: CoreType, model: ServiceModel) -> float:
        """Work units per millisecond on a core of the given type."""
        return self.work_units / self.service_ms(core_type, model)


@dataclass
class ThreadState:
    thread_id: int
    current_core: int
    active_request: Optional[str] = None
    work_remaining: float = 0.0
    segment_start_ms: float = 0.0
    dwell_since_ms: float = 0.0
    version: int = 0


class EventKind(IntEnum):
    # Same-timestamp order: freed threads are visible to arrivals, ticks see both
    COMPLETION = 0
    ARRIVAL = 1
    MAPPER_TICK = 2


class EventQueue:
    """Time-ordered events; ties by kind, then insertion order."""

    def __init__(self):
        self._heap: List[Tuple[float, int, int, Any]] = []
        self._seq = 0

    def push(self, time_ms: float, kind: EventKind, payload: Any = None):
        heapq.heappush(self._heap, (time_ms, int(kind), self._seq, payload))
        self._seq += 1

    def peek(self) -> Tuple[float, EventKind, Any]:
        time_ms, kind, _, payload = self._heap[0]
        return time_ms, EventKind(kind), payload

    def pop(self) -> Tuple[float, EventKind, Any]:
        time_ms, kind, _, payload = heapq.heappop(self._heap)
        return time_ms, EventKind(kind), payload

    def __len__(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class PowerSample:
    t_ms: float
    big_cluster_w: float
    little_cluster_w: float
    rest_w: float


@dataclass(frozen=True)
class MigrationRecord:
    t_ms: float
    thread_id: int
    request_id: Optional[str]
    from_core: int
    to_core: int


@dataclass
class Trace:
    config: SimConfig
    requests: List[Request]
    power_samples: List[PowerSample]
    migrations: List[MigrationRecord]
    energy: EnergySplit
    horizon_ms: float
    end_ms: float
    max_work_error: float = 0.0

    @property
    def completed(self) -> List[Request]:
        return [r for r in self.requests if r.completion_ms is not None]

    @property
    def in_flight(self) -> int:
        return len(self.requests) - len(self.completed)


def seed_streams(rng_seed: int) -> List[np.random.SeedSequence]:
    """Independent workload, noise and mapping streams for one seed."""
    return np.random.SeedSequence(rng_seed).spawn(3)


def apply_migration(thread: ThreadState, request: Request, to_core: int, now_ms: float,
                    overhead_ms: float, topology: Topology, model: ServiceModel) -> Tuple[ThreadState, float]:
    """
    Move a busy thread to another core, conserving the work already done

    Progress since the current segment began is charged at the old core's rate;
    the rest runs at the new core's rate after the migration overhead.

    Returns:
        (updated thread, completion time of its request)
    """
    old_type = topology.core_type(thread.current_core)
    if to_core == thread.current_core:
        return thread, thread.segment_start_ms + thread.work_remaining / request.rate(old_type, model)

    new_type = topology.core_type(to_core)
    done = max(0.0, now_ms - thread.segment_start_ms) * request.rate(old_type, model)
    done = min(done, thread.work_remaining)
    request.work_processed += done
    request.dwell.append(Dwell(thread.current_core, old_type, now_ms - thread.dwell_since_ms))
    request.migrations += 1

    remaining = thread.work_remaining - done
    segment_start = now_ms + overhead_ms
    moved = replace(
        thread,
        current_core=to_core,
        work_remaining=remaining,
        segment_start_ms=segment_start,
        dwell_since_ms=now_ms,
        version=thread.version + 1,
    )
    return moved, segment_start + remaining / request.rate(new_type, model)


class Simulator:
    """One deterministic run of the server under a single config."""

    def __init__(self, cfg: SimConfig, arrivals: Optional[Sequence[Request]] = None):
        violations = validate_config(cfg)
        if violations:
            raise ConfigInvalid(violations)
        self.cfg = cfg
        self.topology = cfg.topology
        self.model = cfg.service_model

        _, noise_seq, mapping_seq = seed_streams(cfg.rng_seed)

        if arrivals is None:
            from model.workload import generate_for
            arrivals = generate_for(cfg)
        noise_rng = np.random.default_rng(noise_seq)
        self.requests: List[Request] = []
        for arrival in arrivals:
            request = Request(arrival.request_id, arrival.keywords, arrival.arrival_ms, arrival.work_units)
            request.noise = noise_factor(self.model.noise_cv, noise_rng)
            self.requests.append(request)
        self.by_id: Dict[str, Request] = {r.request_id: r for r in self.requests}
        if len(self.by_id) != len(self.requests):
            raise ValueError("request ids in an arrival stream must be unique")

        occupancy = initial_mapping(cfg.thread_pool_size, self.topology, cfg.policy,
                                    np.random.default_rng(mapping_seq))
        self.threads: Dict[int, ThreadState] = {
            tid: ThreadState(tid, occupancy.running_core(tid)) for tid in range(cfg.thread_pool_size)
        }
        self.mapper = MapperState(self.topology, cfg.mapper, occupancy, cfg.policy, start_sampling_ms=0.0)

        self.horizon_ms = max([cfg.duration_s * 1000.0] + [r.arrival_ms for r in self.requests])
        self.queue = EventQueue()
        for request in self.requests:
            self.queue.push(request.arrival_ms, EventKind.ARRIVAL, request.request_id)
        if cfg.policy is Policy.HURRY_UP:
            self.queue.push(cfg.mapper.sampling_time_ms, EventKind.MAPPER_TICK)

        self.waiting: Deque[str] = deque()
        self.pending_stats: List[StatsEvent] = []
        self.migrations: List[MigrationRecord] = []
        self.now_ms = 0.0
        self.in_service = 0
        self.max_work_error = 0.0

        self.energy = EnergySplit(0.0, 0.0, 0.0)
        self.power_samples: List[PowerSample] = []
        self._active_cores: Set[int] = set()
        self._record_power(0.0)

    # Power bookkeeping

    def _busy_cores(self) -> Set[int]:
        return {t.current_core for t in self.threads.values() if t.active_request is not None}

    def _record_power(self, t_ms: float):
        self.power_samples.append(PowerSample(t_ms, *cluster_power(self.cfg.power_model, self.topology,
                                                                   self._active_cores)))

    def _advance_clock(self, t_ms: float):
        split = integrate_power(t_ms - self.now_ms, self.cfg.power_model, self.topology, self._active_cores)
        self.energy = EnergySplit(*(a + b for a, b in zip(self.energy, split)))
        self.now_ms = t_ms

    def _refresh_activity(self):
        busy = self._busy_cores()
        if busy != self._active_cores:
            self._active_cores = busy
            if self.power_samples and self.power_samples[-1].t_ms == self.now_ms:
                self.power_samples.pop()
            self._record_power(self.now_ms)

    # Request lifecycle

    def _emit(self, event: StatsEvent):
        if self.cfg.policy is Policy.HURRY_UP:
            self.pending_stats.append(event)

    def _start_service(self, thread: ThreadState, request: Request):
        core_type = self.topology.core_type(thread.current_core)
        request.start_service_ms = self.now_ms
        thread.active_request = request.request_id
        thread.work_remaining = request.work_units
        thread.segment_start_ms = self.now_ms
        thread.dwell_since_ms = self.now_ms
        thread.version += 1
        self.in_service += 1
        self.queue.push(self.now_ms + request.service_ms(core_type, self.model), EventKind.COMPLETION,
                        (thread.thread_id, thread.version))
        self._emit(StatsEvent(thread.thread_id, request.request_id, math.floor(self.now_ms)))

    def _on_arrival(self, request_id: str):
        # lowest-id idle thread takes the request
        idle = sorted(tid for tid, t in self.threads.items() if t.active_request is None)
        if not idle:
            self.waiting.append(request_id)
            return
        thread = self.threads[idle[0]]
        self._start_service(thread, self.by_id[request_id])

    def _on_completion(self, payload: Tuple[int, int]):
        thread_id, _ = payload
        thread = self.threads[thread_id]
        request = self.by_id[thread.active_request]
        core_type = self.topology.core_type(thread.current_core)

        request.work_processed += thread.work_remaining
        error = abs(request.work_processed - request.work_units)
        self.max_work_error = max(self.max_work_error, error)
        if error > WORK_TOLERANCE:
            raise SimulationInvariantError(
                f"request {request.request_id} processed {request.work_processed} of {request.work_units} work units"
            )
        request.dwell.append(Dwell(thread.current_core, core_type, self.now_ms - thread.dwell_since_ms))
        request.completion_ms = self.now_ms
        request.final_core_type = core_type

        thread.active_request = None
        thread.work_remaining = 0.0
        thread.version += 1
        self.in_service -= 1
        self._emit(StatsEvent(thread.thread_id, request.request_id, math.floor(self.now_ms)))

        if self.waiting:
            self._start_service(thread, self.by_id[self.waiting.popleft()])

    def _migrate(self, thread_id: int, to_core: int):
        thread = self.threads[thread_id]
        from_core = thread.current_core
        if from_core == to_core:
            return
        if thread.active_request is None:
            thread.current_core = to_core
            self.migrations.append(MigrationRecord(self.now_ms, thread_id, None, from_core, to_core))
            return
        request = self.by_id[thread.active_request]
        moved, completion_ms = apply_migration(thread, request, to_core, self.now_ms,
                                               self.cfg.migration_overhead_ms, self.topology, self.model)
        self.threads[thread_id] = moved
        self.queue.push(completion_ms, EventKind.COMPLETION, (thread_id, moved.version))
        self.migrations.append(MigrationRecord(self.now_ms, thread_id, request.request_id, from_core, to_core))

    def _on_tick(self):
        outcome = mapper_step(self.mapper, self.pending_stats, self.now_ms)
        self.pending_stats = []
        self.mapper = outcome.state
        if outcome.rejected:
            raise SimulationInvariantError(f"engine produced conflicting stats events: {outcome.rejected}")
        if outcome.plan is not None:
            for move in outcome.plan:
                self._migrate(move.thread_id, move.to_core_id)
                if move.displaced_thread_id is not None:
                    self._migrate(move.displaced_thread_id, move.displaced_to_core_id)

        if self.now_ms < self.horizon_ms or self.in_service or self.waiting:
            self.queue.push(self.now_ms + self.cfg.mapper.sampling_time_ms, EventKind.MAPPER_TICK)

    # Driver

    def _is_stale(self, kind: EventKind, payload) -> bool:
        if kind is not EventKind.COMPLETION:
            return False
        thread_id, version = payload
        thread = self.threads[thread_id]
        return thread.version != version or thread.active_request is None

    def _discard_stale(self):
        # completions superseded by a migration stay in the heap until they surface
        while len(self.queue) and self._is_stale(*self.queue.peek()[1:]):
            self.queue.pop()

    @property
    def done(self) -> bool:
        self._discard_stale()
        return len(self.queue) == 0

    def step(self):
        """Process exactly one live event."""
        self._discard_stale()
        t_ms, kind, payload = self.queue.pop()
        self._advance_clock(t_ms)
        if kind is EventKind.ARRIVAL:
            self._on_arrival(payload)
        elif kind is EventKind.COMPLETION:
            self._on_completion(payload)
        else:
            self._on_tick()
        self._refresh_activity()

    def run(self) -> Trace:
        while not self.done:
            self.step()
        completed = sum(1 for r in self.requests if r.completion_ms is not None)
        if completed != len(self.requests):
            raise SimulationInvariantError(f"{len(self.requests) - completed} request(s) never completed")
        return self.trace()

    def trace(self) -> Trace:
        return Trace(
            config=self.cfg,
            requests=self.requests,
            power_samples=list(self.power_samples),
            migrations=list(self.migrations),
            energy=self.energy,
            horizon_ms=self.horizon_ms,
            end_ms=self.now_ms,
            max_work_error=self.max_work_error,
        )


def run(cfg: SimConfig, arrivals: Optional[Sequence[Request]] = None) -> Trace:
    """
    Simulate `cfg` from empty to drained

    Args:
        cfg: a config for which validate_config returns no violations
        arrivals: optional replayed arrival stream; generated from cfg.rng_seed otherwise

    Returns:
        The completed Trace
    """
    trace = Simulator(cfg, arrivals).run()
    logger.debug(f"Simulated {len(trace.requests)} requests under {cfg.policy.value} "
                 f"at {cfg.qps} QPS, drained at {trace.end_ms:.1f} ms")
    return trace

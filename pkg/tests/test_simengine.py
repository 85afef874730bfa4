"""Tests for the discrete-event simulator, service and power models."""

from dataclasses import replace

import numpy as np
import pytest

from model.domain import ConfigInvalid, CoreType, KeywordDist, Policy, PowerModel, SimConfig, Topology
from model.simengine import (
    EventKind,
    EventQueue,
    Request,
    SimulationInvariantError,
    Simulator,
    ThreadState,
    apply_migration,
    base_service_time,
    fit_power_model,
    integrate_power,
    noise_factor,
    run,
    service_time,
)
from utils.data_manager import trace_digest

from tests.conftest import trace_violations


# service time

def test_service_time_calibration_points(noiseless_model):
    rng = np.random.default_rng(0)
    assert service_time(5, CoreType.LITTLE, noiseless_model, rng) == pytest.approx(500.0)
    assert service_time(17, CoreType.BIG, noiseless_model, rng) == pytest.approx(500.0)
    assert service_time(1, CoreType.LITTLE, noiseless_model, rng) == pytest.approx(100.0)


def test_service_time_includes_fixed_overhead(noiseless_model):
    model = replace(noiseless_model, fixed_overhead_ms=20.0)
    assert base_service_time(2, CoreType.LITTLE, model) == pytest.approx(220.0)


def test_service_time_needs_a_keyword(noiseless_model):
    with pytest.raises(ValueError):
        service_time(0, CoreType.BIG, noiseless_model, np.random.default_rng(0))


def test_noise_has_unit_mean_and_requested_spread():
    rng = np.random.default_rng(1)
    draws = np.array([noise_factor(0.15, rng) for _ in range(100_000)])
    assert draws.mean() == pytest.approx(1.0, abs=0.005)
    assert draws.std() == pytest.approx(0.15, abs=0.005)
    assert noise_factor(0.0, rng) == 1.0


# migration

def little_thread(request: Request) -> ThreadState:
    return ThreadState(thread_id=0, current_core=2, active_request=request.request_id,
                       work_remaining=request.work_units)


def test_migration_to_big_core_conserves_work(noiseless_model):
    request = Request("aaaa", 6, 0.0, 6.0)
    thread = little_thread(request)
    moved, completion = apply_migration(thread, request, 0, 300.0, 0.0, Topology(), noiseless_model)
    assert completion - 300.0 == pytest.approx(300.0 / 3.4)
    assert moved.current_core == 0
    assert moved.work_remaining == pytest.approx(3.0)
    assert request.work_processed == pytest.approx(3.0)
    assert request.migrations == 1
    assert request.dwell[0].core_type is CoreType.LITTLE
    assert request.dwell[0].duration_ms == pytest.approx(300.0)


def test_migration_to_same_core_is_identity(noiseless_model):
    request = Request("aaaa", 6, 0.0, 6.0)
    thread = little_thread(request)
    moved, completion = apply_migration(thread, request, 2, 300.0, 0.0, Topology(), noiseless_model)
    assert moved == thread
    assert completion == pytest.approx(600.0)
    assert request.migrations == 0


def test_migration_at_start_gives_pure_big_service(noiseless_model):
    request = Request("aaaa", 6, 0.0, 6.0)
    _, completion = apply_migration(little_thread(request), request, 1, 0.0, 0.0, Topology(), noiseless_model)
    assert completion == pytest.approx(6 * 500.0 / 17)


def test_migration_overhead_delays_completion(noiseless_model):
    request = Request("aaaa", 6, 0.0, 6.0)
    moved, completion = apply_migration(little_thread(request), request, 0, 300.0, 5.0, Topology(),
                                        noiseless_model)
    assert moved.segment_start_ms == 305.0
    assert completion - 305.0 == pytest.approx(300.0 / 3.4)


# power

def test_idle_platform_spends_rest_of_system_power():
    energy = integrate_power(1000.0, PowerModel(), Topology(), set())
    assert energy.rest_j == pytest.approx(0.76)
    assert energy.big_j == 0.0


def test_busy_big_core_at_full_utilisation():
    energy = integrate_power(1000.0, PowerModel(), Topology(), {0})
    assert energy.big_j == pytest.approx(0.76)


def test_zero_length_interval():
    assert integrate_power(0.0, PowerModel(), Topology(), {0, 1, 2}).total_j == 0.0


def test_power_fit_reproduces_default_model():
    fitted = fit_power_model()
    default = PowerModel()
    assert fitted.big_active_w == pytest.approx(default.big_active_w)
    assert fitted.little_active_w == pytest.approx(default.little_active_w, abs=1e-4)
    assert fitted.big_idle_w == pytest.approx(default.big_idle_w, abs=1e-4)
    assert fitted.little_idle_w == pytest.approx(default.little_idle_w, abs=2e-4)
    assert fitted.rest_of_system_w == default.rest_of_system_w
    assert min(fitted.big_idle_w, fitted.little_idle_w) >= 0.0


# event queue

def test_event_queue_tie_order():
    queue = EventQueue()
    queue.push(5.0, EventKind.MAPPER_TICK, "tick")
    queue.push(5.0, EventKind.ARRIVAL, "a1")
    queue.push(5.0, EventKind.COMPLETION, "done")
    queue.push(5.0, EventKind.ARRIVAL, "a2")
    queue.push(3.0, EventKind.ARRIVAL, "early")
    popped = [queue.pop()[2] for _ in range(len(queue))]
    assert popped == ["early", "done", "a1", "a2", "tick"]


# engine

def noiseless_config(noiseless_model, **changes) -> SimConfig:
    return replace(SimConfig(service_model=noiseless_model, duration_s=1.0), **changes)


@pytest.mark.parametrize("policy", [Policy.HURRY_UP, Policy.STATIC_RANDOM])
@pytest.mark.parametrize("seed", range(10))
def test_first_arrival_is_served_by_thread_0(noiseless_model, policy, seed):
    cfg = noiseless_config(noiseless_model, policy=policy, rng_seed=seed)
    sim = Simulator(cfg, [Request("aaaa", 3, 0.0, 3.0)])
    sim.step()
    busy = [t.thread_id for t in sim.threads.values() if t.active_request is not None]
    assert busy == [0]
    assert sim.threads[0].active_request == "aaaa"
    if policy is Policy.HURRY_UP:
        assert [(e.thread_id, e.request_id, e.timestamp_ms) for e in sim.pending_stats] == [(0, "aaaa", 0)]
    else:
        assert sim.pending_stats == []


def test_arrival_with_all_threads_busy_is_queued(noiseless_model):
    arrivals = [Request(f"r{i:03d}", 5, 0.0, 5.0) for i in range(7)]
    sim = Simulator(noiseless_config(noiseless_model), arrivals)
    for _ in range(7):
        sim.step()
    assert sim.in_service == 6
    assert list(sim.waiting) == ["r006"]


def test_lone_request_latency_is_its_service_time(noiseless_model):
    cfg = noiseless_config(noiseless_model, policy=Policy.STATIC_RANDOM)
    trace = run(cfg, [Request("aaaa", 4, 100.0, 4.0)])
    request = trace.requests[0]
    assert request.latency_ms == pytest.approx(4 * noiseless_model.ms_per_keyword(request.final_core_type))
    assert request.migrations == 0
    assert len(request.dwell) == 1


def test_heavy_request_is_hurried_onto_a_big_core(noiseless_model):
    cfg = noiseless_config(noiseless_model, topology=Topology(1, 1), thread_pool_size=2)
    trace = run(cfg, [Request("aaaa", 10, 0.0, 10.0), Request("bbbb", 10, 0.0, 10.0)])
    assert len(trace.completed) == 2
    assert trace.migrations
    assert max(r.latency_ms for r in trace.requests) < 10 * noiseless_model.little_ms_per_keyword
    assert trace.max_work_error <= 1e-9


def test_static_runs_never_migrate(static_config):
    trace = run(static_config)
    assert trace.migrations == []
    assert all(r.migrations == 0 for r in trace.requests)


def test_zero_noise_static_latency_is_wait_plus_service(noiseless_model):
    cfg = noiseless_config(noiseless_model, policy=Policy.STATIC_RANDOM, qps=15.0, duration_s=20.0)
    trace = run(cfg)
    for r in trace.requests:
        service = r.keywords * noiseless_model.ms_per_keyword(r.final_core_type)
        assert r.latency_ms == pytest.approx((r.start_service_ms - r.arrival_ms) + service)


def test_trace_invariants_under_load():
    trace = run(SimConfig(qps=12.0, duration_s=20.0, rng_seed=5))
    assert trace.in_flight == 0
    assert trace.end_ms >= trace.horizon_ms
    assert trace.migrations
    assert trace_violations(trace) == []


def test_saturated_run_still_drains():
    trace = run(SimConfig(qps=40.0, duration_s=5.0, rng_seed=2))
    assert trace.in_flight == 0
    assert trace.end_ms > trace.horizon_ms


def test_runs_are_reproducible(short_config):
    assert trace_digest(run(short_config)) == trace_digest(run(short_config))
    assert trace_digest(run(short_config)) != trace_digest(run(replace(short_config, rng_seed=4)))


def test_policies_see_the_same_workload(short_config):
    hurry = run(short_config)
    static = run(replace(short_config, policy=Policy.STATIC_RANDOM))
    assert [(r.request_id, r.arrival_ms, r.keywords, r.noise) for r in hurry.requests] == \
        [(r.request_id, r.arrival_ms, r.keywords, r.noise) for r in static.requests]


def test_invalid_config_is_refused():
    with pytest.raises(ConfigInvalid):
        Simulator(SimConfig(qps=-1.0))


def test_duplicate_request_ids_are_refused(noiseless_model):
    arrivals = [Request("aaaa", 1, 0.0, 1.0), Request("aaaa", 2, 5.0, 2.0)]
    with pytest.raises(ValueError):
        Simulator(noiseless_config(noiseless_model), arrivals)


def test_zipf_workload_runs():
    trace = run(SimConfig(qps=5.0, duration_s=5.0, keyword_dist=KeywordDist.zipf(1.1, 17)))
    assert trace.in_flight == 0


def test_invariant_error_is_a_runtime_error():
    assert issubclass(SimulationInvariantError, RuntimeError)

"""Shared fixtures for the Hurry-up test suite."""

import math
from dataclasses import replace
from typing import List

import pytest

from model.domain import Policy, ServiceModel, SimConfig

# Stats stream captured from an instrumented search server
SNAPSHOT_LINES = [
    "75;ixI.;1498060927539",
    "77;1J.D;1498060927953",
    "78;579[;1498060927954",
    "79;Xrt@;1498060928003",
    "80;qc8o;1498060928014",
    "77;1J.D;1498060928023",
]


@pytest.fixture
def snapshot_bytes() -> bytes:
    return "".join(line + "\n" for line in SNAPSHOT_LINES).encode("ascii")


@pytest.fixture
def noiseless_model() -> ServiceModel:
    return replace(ServiceModel(), noise_cv=0.0)


@pytest.fixture
def short_config() -> SimConfig:
    """A light, short run that finishes in well under a second."""
    return SimConfig(qps=5.0, duration_s=10.0, rng_seed=3)


@pytest.fixture
def static_config(short_config) -> SimConfig:
    return replace(short_config, policy=Policy.STATIC_RANDOM)


def trace_violations(trace) -> List[str]:
    """Conservation checks for a finished simulation; empty when the trace is sound."""
    problems = []
    if len(trace.completed) != len(trace.requests):
        problems.append(f"{len(trace.requests) - len(trace.completed)} request(s) never completed")
    if trace.max_work_error > 1e-9:
        problems.append(f"work error {trace.max_work_error}")

    for r in trace.requests:
        if r.completion_ms is None:
            continue
        if not r.arrival_ms <= r.start_service_ms <= r.completion_ms:
            problems.append(f"{r.request_id}: timestamps out of order")
        if abs(r.work_processed - r.work_units) > 1e-9:
            problems.append(f"{r.request_id}: processed {r.work_processed} of {r.work_units}")
        if len(r.dwell) != r.migrations + 1:
            problems.append(f"{r.request_id}: {len(r.dwell)} dwell segments for {r.migrations} migration(s)")
        if abs(sum(d.duration_ms for d in r.dwell) - (r.completion_ms - r.start_service_ms)) > 1e-6:
            problems.append(f"{r.request_id}: dwell time does not cover service")

    # re-integrate the piecewise-constant power signal
    samples = trace.power_samples
    ends = [s.t_ms for s in samples[1:]] + [trace.end_ms]
    for name, column in (("big", "big_cluster_w"), ("little", "little_cluster_w"), ("rest", "rest_w")):
        joules = math.fsum(getattr(s, column) * (end - s.t_ms) for s, end in zip(samples, ends)) / 1000.0
        reported = getattr(trace.energy, f"{name}_j")
        if abs(joules - reported) > 1e-6:
            problems.append(f"{name} energy {reported} J but samples integrate to {joules} J")
    return problems

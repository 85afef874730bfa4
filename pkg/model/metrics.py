"""
Evaluation metrics
Tail percentiles, latency PDF/CDF tables, energy totals and paired policy
comparisons computed from simulator traces or live sessions.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from model.domain import CoreType
from model.simengine import Trace

REPORT_PERCENTILES = (50, 90, 95, 99)


class EmptySample(ValueError):
    """A statistic was requested over no observations."""


def percentile(latencies: Sequence[float], p: float) -> float:
    """
    Nearest-rank percentile: the sorted sample at 1-based rank ceil(p/100 * n)

    Raises:
        EmptySample: no latencies
    """
    if len(latencies) == 0:
        raise EmptySample("percentile of an empty sample")
    if not 0 <= p <= 100:
        raise ValueError(f"percentile must be within 0..100, got {p}")
    ordered = sorted(latencies)
    rank = max(1, math.ceil(p * len(ordered) / 100))
    return ordered[rank - 1]


def histogram(latencies: Sequence[float], bin_ms: float) -> pd.DataFrame:
    """
    Latency density and cumulative tables over fixed-width bins aligned to multiples of bin_ms

    Returns:
        DataFrame with bin_start_ms, bin_end_ms, pdf and cdf columns; pdf sums to 1
        and cdf ends at exactly 1.0

    Raises:
        EmptySample: no latencies
    """
    if not bin_ms > 0:
        raise ValueError(f"bin_ms must be > 0, got {bin_ms}")
    if len(latencies) == 0:
        raise EmptySample("histogram of an empty sample")
    values = np.asarray(latencies, dtype=float)
    bins = np.floor(values / bin_ms).astype(int)
    counts = np.bincount(bins - bins.min())
    starts = (np.arange(len(counts)) + bins.min()) * bin_ms
    n = len(values)
    return pd.DataFrame({
        "bin_start_ms": starts,
        "bin_end_ms": starts + bin_ms,
        "pdf": counts / n,
        "cdf": np.cumsum(counts) / n,
    })


@dataclass
class Report:
    request_count: int
    in_flight: int = 0
    migration_count: int = 0
    p50_ms: Optional[float] = None
    p90_ms: Optional[float] = None
    p95_ms: Optional[float] = None
    p99_ms: Optional[float] = None
    max_ms: Optional[float] = None
    energy_big_j: float = 0.0
    energy_little_j: float = 0.0
    energy_rest_j: float = 0.0
    energy_total_j: float = 0.0
    core_type_shares: Dict[str, float] = field(default_factory=dict)
    qps_achieved: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _latency_fields(latencies: Sequence[float]) -> Dict[str, Optional[float]]:
    if not latencies:
        return {}
    values = {f"p{p}_ms": percentile(latencies, p) for p in REPORT_PERCENTILES}
    values["max_ms"] = max(latencies)
    return values


def _shares(core_types: Iterable[CoreType]) -> Dict[str, float]:
    core_types = list(core_types)
    if not core_types:
        return {}
    big = sum(1 for c in core_types if c is CoreType.BIG)
    return {CoreType.BIG.value: big / len(core_types),
            CoreType.LITTLE.value: (len(core_types) - big) / len(core_types)}


def build_report(trace: Trace) -> Report:
    completed = trace.completed
    latencies = [r.latency_ms for r in completed]
    elapsed_s = trace.end_ms / 1000.0
    return Report(
        request_count=len(completed),
        in_flight=trace.in_flight,
        migration_count=sum(1 for m in trace.migrations if m.request_id is not None),
        energy_big_j=trace.energy.big_j,
        energy_little_j=trace.energy.little_j,
        energy_rest_j=trace.energy.rest_j,
        energy_total_j=trace.energy.total_j,
        core_type_shares=_shares(r.final_core_type for r in completed),
        qps_achieved=len(completed) / elapsed_s if elapsed_s > 0 else 0.0,
        **_latency_fields(latencies),
    )


def session_report(latencies: Sequence[float], in_flight: int, migration_count: int = 0,
                   core_types: Sequence[CoreType] = (), elapsed_s: float = 0.0) -> Report:
    """Report for a live session, where only observed latencies are known."""
    return Report(
        request_count=len(latencies),
        in_flight=in_flight,
        migration_count=migration_count,
        core_type_shares=_shares(core_types),
        qps_achieved=len(latencies) / elapsed_s if elapsed_s > 0 else 0.0,
        **_latency_fields(list(latencies)),
    )


@dataclass(frozen=True)
class Comparison:
    tail_reduction_pct: float
    energy_overhead_pct: float
    hurryup_p90_ms: float
    static_p90_ms: float
    hurryup_energy_j: float
    static_energy_j: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def compare(hurryup: Report, static: Report) -> Comparison:
    """
    Paired deltas of two reports over the same replayed workload

    tail_reduction_pct is positive when Hurry-up's p90 is lower; energy_overhead_pct
    is positive when Hurry-up spends more energy.
    """
    if hurryup.p90_ms is None or static.p90_ms is None:
        raise EmptySample("cannot compare reports without completed requests")
    return Comparison(
        tail_reduction_pct=(static.p90_ms - hurryup.p90_ms) / static.p90_ms * 100,
        energy_overhead_pct=((hurryup.energy_total_j - static.energy_total_j) / static.energy_total_j * 100
                             if static.energy_total_j else 0.0),
        hurryup_p90_ms=hurryup.p90_ms,
        static_p90_ms=static.p90_ms,
        hurryup_energy_j=hurryup.energy_total_j,
        static_energy_j=static.energy_total_j,
    )


"""
Open-loop workload generator
Poisson arrivals at a fixed QPS, each query carrying a keyword count drawn
from a configurable distribution. Streams can be written to and read back
from CSV so the same load is replayed under every policy.
"""

import logging
import os
from typing import List

import numpy as np
import pandas as pd

from model.domain import KeywordDist, SimConfig
from model.simengine import Request, seed_streams

logger = logging.getLogger(__name__)

ARRIVAL_COLUMNS = ["request_id", "arrival_ms", "keywords"]

# Printable token alphabet without ';' so ids survive the stats wire format
_TOKEN_ALPHABET = "".join(chr(c) for c in range(33, 127) if chr(c) != ";")


def request_token(index: int, width: int = 4) -> str:
    """Opaque fixed-width request id for the index-th request of a stream."""
    base = len(_TOKEN_ALPHABET)
    if not 0 <= index < base ** width:
        raise ValueError(f"request index {index} does not fit in {width} token characters")
    chars = []
    for _ in range(width):
        index, digit = divmod(index, base)
        chars.append(_TOKEN_ALPHABET[digit])
    return "".join(reversed(chars))


def draw_keywords(dist: KeywordDist, count: int, rng: np.random.Generator) -> np.ndarray:
    if dist.kind == "uniform":
        lo, hi = (int(v) for v in dist.params)
        return rng.integers(lo, hi + 1, size=count)
    if dist.kind == "zipf":
        s, max_k = float(dist.params[0]), int(dist.params[1])
        ranks = np.arange(1, max_k + 1)
        weights = ranks ** -s
        return rng.choice(ranks, size=count, p=weights / weights.sum())
    if dist.kind == "fixed":
        return np.full(count, int(dist.params[0]))
    raise ValueError(f"unknown keyword distribution {dist}")


def generate(qps: float, duration_s: float, dist: KeywordDist, rng: np.random.Generator) -> List[Request]:
    """
    Draw an arrival stream

    Arrivals are a Poisson process of rate `qps` over [0, duration_s); keyword
    counts are i.i.d. from `dist`.

    Returns:
        Requests sorted by arrival time with unique ids
    """
    if not qps > 0:
        raise ValueError(f"qps must be > 0, got {qps}")
    horizon_ms = duration_s * 1000.0
    mean_gap_ms = 1000.0 / qps

    gaps = rng.exponential(mean_gap_ms, size=max(16, int(qps * duration_s * 1.2) + 16))
    times = np.cumsum(gaps)
    while times[-1] < horizon_ms:
        more = rng.exponential(mean_gap_ms, size=len(gaps))
        times = np.concatenate([times, times[-1] + np.cumsum(more)])
    times = times[times < horizon_ms]

    keywords = draw_keywords(dist, len(times), rng)
    requests = [
        Request(request_token(i), int(k), float(t), float(k))
        for i, (t, k) in enumerate(zip(times, keywords))
    ]
    logger.debug(f"Generated {len(requests)} arrivals at {qps} QPS over {duration_s} s ({dist})")
    return requests


def generate_for(cfg: SimConfig) -> List[Request]:
    """The arrival stream a run of `cfg` sees; shared by every policy with the same seed and load."""
    workload_seq = seed_streams(cfg.rng_seed)[0]
    return generate(cfg.qps, cfg.duration_s, cfg.keyword_dist, np.random.default_rng(workload_seq))


def arrivals_frame(requests: List[Request]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.request_id, r.arrival_ms, r.keywords) for r in requests],
        columns=ARRIVAL_COLUMNS,
    )


def write_arrivals(requests: List[Request], path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    arrivals_frame(requests).to_csv(path, index=False, float_format="%.17g")
    return path


def read_arrivals(path: str) -> List[Request]:
    frame = pd.read_csv(path, dtype={"request_id": str}, keep_default_na=False, float_precision="round_trip")
    missing = set(ARRIVAL_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"arrival file {path} lacks columns {sorted(missing)}")
    frame = frame.sort_values("arrival_ms", kind="stable")
    return [
        Request(str(row.request_id), int(row.keywords), float(row.arrival_ms), float(row.keywords))
        for row in frame.itertuples(index=False)
    ]

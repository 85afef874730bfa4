"""
Domain vocabulary for the Hurry-up simulator
Core types, platform topology, service/power calibration, mapper tunables and
the simulation config, plus the config validator every other module relies on.
"""

import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Tuple


class CoreType(Enum):
    BIG = "big"
    LITTLE = "little"


class Policy(Enum):
    HURRY_UP = "hurryup"
    STATIC_RANDOM = "static"

    @classmethod
    def parse(cls, text: str) -> "Policy":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown policy '{text}' (expected hurryup or static)")


@dataclass(frozen=True)
class Topology:
    """Big cores take the lowest ids, little cores follow."""

    big_cores: int = 2
    little_cores: int = 4

    @property
    def core_count(self) -> int:
        return self.big_cores + self.little_cores

    @property
    def core_ids(self) -> List[int]:
        return list(range(self.core_count))

    @property
    def big_core_ids(self) -> List[int]:
        return list(range(self.big_cores))

    @property
    def little_core_ids(self) -> List[int]:
        return list(range(self.big_cores, self.core_count))

    def core_type(self, core_id: int) -> CoreType:
        if not 0 <= core_id < self.core_count:
            raise ValueError(f"core {core_id} is outside topology {self.label}")
        return CoreType.BIG if core_id < self.big_cores else CoreType.LITTLE

    @property
    def label(self) -> str:
        parts = []
        if self.big_cores:
            parts.append(f"{self.big_cores}-B")
        if self.little_cores:
            parts.append(f"{self.little_cores}-L")
        return "+".join(parts) or "empty"


@dataclass(frozen=True)
class ServiceModel:
    """Linear-in-keywords service time; defaults put 5 keywords on little and 17 on big at 500 ms."""

    little_ms_per_keyword: float = 100.0
    big_ms_per_keyword: float = 500.0 / 17
    fixed_overhead_ms: float = 0.0
    noise_cv: float = 0.15

    def ms_per_keyword(self, core_type: CoreType) -> float:
        if core_type is CoreType.BIG:
            return self.big_ms_per_keyword
        return self.little_ms_per_keyword

    @property
    def speedup(self) -> float:
        return self.little_ms_per_keyword / self.big_ms_per_keyword


@dataclass(frozen=True)
class PowerModel:
    """Per-core active/idle watts plus the rest of the system (memory controllers etc.)."""

    big_active_w: float = 0.76
    big_idle_w: float = 0.0
    little_active_w: float = 0.0972
    little_idle_w: float = 0.0068
    rest_of_system_w: float = 0.76

    def core_watts(self, core_type: CoreType, active: bool) -> float:
        if core_type is CoreType.BIG:
            return self.big_active_w if active else self.big_idle_w
        return self.little_active_w if active else self.little_idle_w


@dataclass(frozen=True)
class MapperConfig:
    sampling_time_ms: float = 25.0
    migration_threshold_ms: float = 50.0


# zipf sampling builds one weight per rank
MAX_ZIPF_KEYWORDS = 10_000


@dataclass(frozen=True)
class KeywordDist:
    """Keyword-count distribution: uniform(lo,hi), zipf(s,max_k) or fixed(k)."""

    kind: str = "uniform"
    params: Tuple[float, ...] = (1, 10)

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "KeywordDist":
        return cls("uniform", (lo, hi))

    @classmethod
    def zipf(cls, s: float, max_k: int) -> "KeywordDist":
        return cls("zipf", (s, max_k))

    @classmethod
    def fixed(cls, k: int) -> "KeywordDist":
        return cls("fixed", (k,))

    @classmethod
    def parse(cls, text: str) -> "KeywordDist":
        match = re.fullmatch(r"\s*(uniform|zipf|fixed)\s*\(([^)]*)\)\s*", text.lower())
        if not match:
            raise ValueError(f"cannot parse keyword_dist '{text}'")
        kind, raw = match.groups()
        values = tuple(float(v) for v in raw.split(",") if v.strip())
        arity = {"uniform": 2, "zipf": 2, "fixed": 1}[kind]
        if len(values) != arity:
            raise ValueError(f"keyword_dist {kind} takes {arity} argument(s), got {len(values)}")
        if kind == "uniform":
            values = (_as_int(values[0]), _as_int(values[1]))
        elif kind == "zipf":
            values = (values[0], _as_int(values[1]))
        else:
            values = (_as_int(values[0]),)
        return cls(kind, values)

    def violations(self) -> List[str]:
        problems = []
        if self.kind == "uniform":
            if len(self.params) != 2:
                return ["keyword_dist uniform needs (lo, hi)"]
            lo, hi = self.params
            if not _is_count(lo, 1) or not _is_count(hi, 1):
                problems.append("keyword_dist uniform bounds must be integers ≥ 1")
            elif lo > hi:
                problems.append("keyword_dist uniform requires lo ≤ hi")
        elif self.kind == "zipf":
            if len(self.params) != 2:
                return ["keyword_dist zipf needs (s, max_k)"]
            s, max_k = self.params
            if not _positive(s):
                problems.append("keyword_dist zipf exponent s must be > 0")
            if not _is_count(max_k, 1):
                problems.append("keyword_dist zipf max_k must be an integer ≥ 1")
            elif max_k > MAX_ZIPF_KEYWORDS:
                problems.append(f"keyword_dist zipf max_k must be ≤ {MAX_ZIPF_KEYWORDS}")
        elif self.kind == "fixed":
            if len(self.params) != 1 or not _is_count(self.params[0], 1):
                problems.append("keyword_dist fixed k must be an integer ≥ 1")
        else:
            problems.append(f"keyword_dist kind '{self.kind}' is not uniform, zipf or fixed")
        return problems

    def __str__(self) -> str:
        return f"{self.kind}({','.join(_fmt(v) for v in self.params)})"


@dataclass(frozen=True)
class SimConfig:
    topology: Topology = field(default_factory=Topology)
    service_model: ServiceModel = field(default_factory=ServiceModel)
    power_model: PowerModel = field(default_factory=PowerModel)
    mapper: MapperConfig = field(default_factory=MapperConfig)
    thread_pool_size: int = 6
    qps: float = 30.0
    duration_s: float = 60.0
    keyword_dist: KeywordDist = field(default_factory=KeywordDist)
    migration_overhead_ms: float = 0.0
    rng_seed: int = 1
    policy: Policy = Policy.HURRY_UP


def _as_int(value: float) -> int:
    if value != int(value):
        raise ValueError(f"expected an integer, got {value}")
    return int(value)


def _is_count(value, minimum: int) -> bool:
    try:
        return float(value) == int(value) and int(value) >= minimum
    except (TypeError, ValueError, OverflowError):
        return False


def _fmt(value) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def _positive(value) -> bool:
    try:
        return value > 0 and math.isfinite(value)
    except TypeError:
        return False


def _non_negative(value) -> bool:
    try:
        return value >= 0 and math.isfinite(value)
    except TypeError:
        return False


def validate_config(cfg: SimConfig) -> List[str]:
    """
    Check every config invariant

    Returns:
        Human-readable violations naming the offending field; empty when valid.
    """
    violations: List[str] = []

    topo = cfg.topology
    topo_ok = True
    for name in ("big_cores", "little_cores"):
        if not _is_count(getattr(topo, name), 0):
            violations.append(f"{name} must be an integer ≥ 0")
            topo_ok = False
    if topo_ok and topo.core_count < 1:
        violations.append("big_cores + little_cores must be ≥ 1")
        topo_ok = False

    svc = cfg.service_model
    rates_ok = True
    for name in ("little_ms_per_keyword", "big_ms_per_keyword"):
        if not _positive(getattr(svc, name)):
            violations.append(f"{name} must be > 0")
            rates_ok = False
    if not _non_negative(svc.fixed_overhead_ms):
        violations.append("fixed_overhead_ms must be ≥ 0")
    if not _non_negative(svc.noise_cv):
        violations.append("noise_cv must be ≥ 0")
    if rates_ok and not svc.big_ms_per_keyword < svc.little_ms_per_keyword:
        violations.append("big_ms_per_keyword must be < little_ms_per_keyword")

    pwr = cfg.power_model
    power_ok = {}
    for name in ("big_active_w", "big_idle_w", "little_active_w", "little_idle_w", "rest_of_system_w"):
        power_ok[name] = _non_negative(getattr(pwr, name))
        if not power_ok[name]:
            violations.append(f"{name} must be ≥ 0")
    for kind in ("big", "little"):
        active, idle = f"{kind}_active_w", f"{kind}_idle_w"
        if power_ok[active] and power_ok[idle] and getattr(pwr, active) < getattr(pwr, idle):
            violations.append(f"{active} must be ≥ {idle}")

    for name in ("sampling_time_ms", "migration_threshold_ms"):
        if not _positive(getattr(cfg.mapper, name)):
            violations.append(f"{name} must be > 0")

    if not _is_count(cfg.thread_pool_size, 1):
        violations.append("thread_pool_size must be ≥ 1")
    elif topo_ok and cfg.thread_pool_size > topo.core_count:
        violations.append(
            f"thread_pool_size must be ≤ big_cores + little_cores ({topo.core_count})"
        )
    if not _positive(cfg.qps):
        violations.append("qps must be > 0")
    if not _positive(cfg.duration_s):
        violations.append("duration_s must be > 0")
    if not _non_negative(cfg.migration_overhead_ms):
        violations.append("migration_overhead_ms must be ≥ 0")
    if not isinstance(cfg.rng_seed, int) or cfg.rng_seed < 0:
        violations.append("rng_seed must be an integer ≥ 0")
    if not isinstance(cfg.policy, Policy):
        violations.append("policy must be hurryup or static")
    if isinstance(cfg.keyword_dist, KeywordDist):
        violations.extend(cfg.keyword_dist.violations())
    else:
        violations.append("keyword_dist must be uniform(lo,hi), zipf(s,max_k) or fixed(k)")

    return violations


# Named mapper tunings: headline results vs. the sampling interval that read stats best
MAPPER_PRESETS: Dict[str, MapperConfig] = {
    "headline": MapperConfig(sampling_time_ms=25.0, migration_threshold_ms=50.0),
    "sampling50": MapperConfig(sampling_time_ms=50.0, migration_threshold_ms=50.0),
}


def default_config(**changes) -> SimConfig:
    """Default 2 big + 4 little platform with a six-thread pool, optionally with top-level changes."""
    return replace(SimConfig(), **changes)


class ConfigInvalid(ValueError):
    """A config that breaks one or more invariants; `violations` lists them."""

    def __init__(self, violations: List[str]):
        super().__init__("invalid config: " + "; ".join(violations))
        self.violations = list(violations)

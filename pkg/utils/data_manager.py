"""
Result storage for the Hurry-up simulator
Writes per-run directories of trace CSVs, report JSON and latency histograms,
mirroring reports into MongoDB when DATABASE_URL is configured.
"""

import hashlib
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

import pandas as pd

from model.metrics import Comparison, EmptySample, Report, histogram
from model.simengine import Trace
from utils.config_loader import config_to_text

logger = logging.getLogger(__name__)

REQUEST_COLUMNS = ["request_id", "keywords", "arrival_ms", "start_ms", "completion_ms",
                   "latency_ms", "migrations", "final_core_type"]
POWER_COLUMNS = ["t_ms", "big_cluster_w", "little_cluster_w", "rest_w"]
DEFAULT_BIN_MS = 10.0


class IoFailure(OSError):
    """Results could not be written to the output directory."""


def requests_frame(trace: Trace) -> pd.DataFrame:
    """One row per request in arrival order."""
    rows = []
    for r in trace.requests:
        rows.append({
            "request_id": r.request_id,
            "keywords": r.keywords,
            "arrival_ms": r.arrival_ms,
            "start_ms": r.start_service_ms,
            "completion_ms": r.completion_ms,
            "latency_ms": r.latency_ms,
            "migrations": r.migrations,
            "final_core_type": r.final_core_type.value if r.final_core_type else "",
        })
    return pd.DataFrame(rows, columns=REQUEST_COLUMNS)


def power_frame(trace: Trace) -> pd.DataFrame:
    return pd.DataFrame(
        [(s.t_ms, s.big_cluster_w, s.little_cluster_w, s.rest_w) for s in trace.power_samples],
        columns=POWER_COLUMNS,
    )


def trace_digest(trace: Trace) -> str:
    """SHA-256 over the exported request and power CSVs of a trace."""
    digest = hashlib.sha256()
    digest.update(requests_frame(trace).to_csv(index=False).encode())
    digest.update(power_frame(trace).to_csv(index=False).encode())
    return digest.hexdigest()


def _write_json(data: Dict[str, Any], path: str):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, default=str)


class ResultStore:
    """Handles run output for the CLI, with an optional MongoDB mirror"""

    def __init__(self, out_dir: str = "results", use_mongodb: Optional[bool] = None):
        self.out_dir = out_dir
        self.use_mongodb = bool(os.getenv('DATABASE_URL')) if use_mongodb is None else use_mongodb
        self.db_manager = None

        if self.use_mongodb:
            try:
                from utils.mongodb_manager import MongoRunStore
                self.db_manager = MongoRunStore()
                logger.info("✅ Mirroring run reports to MongoDB")
            except Exception as e:
                logger.error(f"❌ MongoDB connection failed: {e}")
                logger.info("🔄 Falling back to local file storage only")
                self.use_mongodb = False
                self.db_manager = None
        self.ensure_dir(self.out_dir)

    @staticmethod
    def ensure_dir(path: str) -> str:
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as e:
            raise IoFailure(e.errno, f"cannot create output directory {path}: {e.strerror}") from e
        return path

    def run_dir(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def save_run(self, name: str, trace: Trace, report: Report, bin_ms: float = DEFAULT_BIN_MS) -> str:
        """
        Write one run's outputs under out_dir/name

        Files: requests.csv, power.csv, report.json, latency_pdf.csv,
        latency_cdf.csv and config.txt.

        Returns:
            The run directory
        """
        run_dir = self.ensure_dir(self.run_dir(name))
        try:
            requests_frame(trace).to_csv(os.path.join(run_dir, "requests.csv"), index=False)
            power_frame(trace).to_csv(os.path.join(run_dir, "power.csv"), index=False)
            _write_json(report.to_dict(), os.path.join(run_dir, "report.json"))
            self._save_histograms(run_dir, [r.latency_ms for r in trace.completed], bin_ms)
            with open(os.path.join(run_dir, "config.txt"), 'w') as f:
                f.write(config_to_text(trace.config))
        except OSError as e:
            raise IoFailure(e.errno, f"cannot write run {name} to {run_dir}: {e.strerror or e}") from e
        logger.info(f"Saved run {name} to {run_dir}")

        self._mirror_run(name, trace, report)
        return run_dir

    def _save_histograms(self, run_dir: str, latencies: List[float], bin_ms: float):
        try:
            table = histogram(latencies, bin_ms)
        except EmptySample:
            table = pd.DataFrame(columns=["bin_start_ms", "bin_end_ms", "pdf", "cdf"])
        table[["bin_start_ms", "pdf"]].to_csv(os.path.join(run_dir, "latency_pdf.csv"), index=False)
        table[["bin_start_ms", "cdf"]].to_csv(os.path.join(run_dir, "latency_cdf.csv"), index=False)

    def _mirror_run(self, name: str, trace: Trace, report: Report):
        if not (self.use_mongodb and self.db_manager):
            return
        cfg = trace.config
        config_doc = {
            'policy': cfg.policy.value,
            'qps': cfg.qps,
            'rng_seed': cfg.rng_seed,
            'topology': cfg.topology.label,
            'sampling_time_ms': cfg.mapper.sampling_time_ms,
            'migration_threshold_ms': cfg.mapper.migration_threshold_ms,
            'config_text': config_to_text(cfg),
        }
        try:
            self.db_manager.store_run(trace_digest(trace), name, config_doc, report.to_dict())
        except Exception as e:
            logger.error(f"MongoDB mirror of run {name} failed: {e}, results kept locally")

    def save_comparison(self, comparison: Comparison, name: str = "comparison") -> str:
        path = os.path.join(self.ensure_dir(self.out_dir), f"{name}.json")
        data = comparison.to_dict()
        data['created_at'] = datetime.now().isoformat()
        try:
            _write_json(data, path)
        except OSError as e:
            raise IoFailure(e.errno, f"cannot write {path}: {e.strerror or e}") from e

        if self.use_mongodb and self.db_manager:
            self.db_manager.store_comparison(name, comparison.to_dict())
        return path

    def save_sweep(self, frame: pd.DataFrame, name: str = "sweep") -> str:
        path = os.path.join(self.ensure_dir(self.out_dir), f"{name}.csv")
        try:
            frame.to_csv(path, index=False)
        except OSError as e:
            raise IoFailure(e.errno, f"cannot write {path}: {e.strerror or e}") from e
        logger.info(f"Saved {len(frame)} sweep cell(s) to {path}")
        return path

    def save_session_report(self, report: Report, latencies: List[float],
                            name: str = "live", bin_ms: float = DEFAULT_BIN_MS) -> str:
        """Write a live session's report and histograms under out_dir/name"""
        run_dir = self.ensure_dir(self.run_dir(name))
        try:
            _write_json(report.to_dict(), os.path.join(run_dir, "report.json"))
            self._save_histograms(run_dir, latencies, bin_ms)
        except OSError as e:
            raise IoFailure(e.errno, f"cannot write session report to {run_dir}: {e.strerror or e}") from e
        return run_dir

    def close(self):
        if self.db_manager:
            self.db_manager.close_connection()

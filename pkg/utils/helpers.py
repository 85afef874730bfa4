"""
Utility functions for the Hurry-up command line
"""

import logging
import os
from typing import Optional

from model.metrics import Comparison, Report

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Root logging for the entry script; level falls back to HURRYUP_LOG_LEVEL, then INFO"""
    level = (level or os.getenv('HURRYUP_LOG_LEVEL') or 'INFO').upper()
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT,
                        handlers=handlers, force=True)


def _ms(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.1f} ms"


def format_report(report: Report, title: str = "Report") -> str:
    """Aligned-column text rendering of a Report"""
    rows = [
        ("completed", str(report.request_count)),
        ("in flight", str(report.in_flight)),
        ("migrations", str(report.migration_count)),
        ("p50", _ms(report.p50_ms)),
        ("p90", _ms(report.p90_ms)),
        ("p95", _ms(report.p95_ms)),
        ("p99", _ms(report.p99_ms)),
        ("max", _ms(report.max_ms)),
        ("energy big", f"{report.energy_big_j:.3f} J"),
        ("energy little", f"{report.energy_little_j:.3f} J"),
        ("energy rest", f"{report.energy_rest_j:.3f} J"),
        ("energy total", f"{report.energy_total_j:.3f} J"),
        ("achieved QPS", f"{report.qps_achieved:.2f}"),
    ]
    for core_type, share in sorted(report.core_type_shares.items()):
        rows.append((f"served on {core_type}", f"{share * 100:.1f}%"))

    width = max(len(label) for label, _ in rows)
    lines = [title, "-" * len(title)]
    lines.extend(f"{label.ljust(width)}  {value}" for label, value in rows)
    return "\n".join(lines)


def format_comparison(comparison: Comparison) -> str:
    rows = [
        ("p90 hurryup", _ms(comparison.hurryup_p90_ms)),
        ("p90 static", _ms(comparison.static_p90_ms)),
        ("tail reduction", f"{comparison.tail_reduction_pct:.1f}%"),
        ("energy overhead", f"{comparison.energy_overhead_pct:.1f}%"),
    ]
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)

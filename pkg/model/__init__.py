# Model package for the Hurry-up simulator

from .domain import (
    ConfigInvalid,
    CoreType,
    KeywordDist,
    MapperConfig,
    Policy,
    PowerModel,
    ServiceModel,
    SimConfig,
    Topology,
    default_config,
    validate_config,
)
from .mapper import MapperState, MigrationPlan, initial_mapping, mapper_step, select_migrations
from .metrics import Report, build_report, compare, histogram, percentile
from .simengine import Simulator, Trace, fit_power_model, run, service_time
from .workload import generate, generate_for

__all__ = [
    'ConfigInvalid',
    'CoreType',
    'KeywordDist',
    'MapperConfig',
    'Policy',
    'PowerModel',
    'ServiceModel',
    'SimConfig',
    'Topology',
    'default_config',
    'validate_config',
    'MapperState',
    'MigrationPlan',
    'initial_mapping',
    'mapper_step',
    'select_migrations',
    'Report',
    'build_report',
    'compare',
    'histogram',
    'percentile',
    'Simulator',
    'Trace',
    'fit_power_model',
    'run',
    'service_time',
    'generate',
    'generate_for',
]

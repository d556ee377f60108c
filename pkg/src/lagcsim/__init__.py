"""Straggler-tolerant distributed gradient descent: simulator and analysis.

Simulates the Parameter Server training protocol with storage redundancy,
group gradient coding and lazy (staleness-based) group selection, and checks
the runs against closed-form iteration/time/communication/computation
complexity predictions.
"""

from .dataset import (Assignment, Dataset, Partition, build_assignment,
                      dataset_from_config, generate_dataset, paper_smoothness_law,
                      rescale_to_smoothness)
from .engine import (MetricsTrace, SchemeConfig, build_workload, compiled_backend_available,
                     default_backend, preset_config, run_until, trace_functions)
from .errors import ConfigError, DataGenerationError, DecodeError, DivergenceError
from .timing import TimingModel, expected_max_group_time, expected_order_stat, sample_times

__version__ = "0.1.0"

__all__ = [
    "Assignment", "ConfigError", "DataGenerationError", "Dataset", "DecodeError",
    "DivergenceError", "MetricsTrace", "Partition", "SchemeConfig", "TimingModel",
    "build_assignment", "build_workload", "compiled_backend_available",
    "dataset_from_config", "default_backend", "expected_max_group_time",
    "expected_order_stat", "generate_dataset", "paper_smoothness_law",
    "preset_config", "rescale_to_smoothness", "run_until", "sample_times",
    "trace_functions",
]

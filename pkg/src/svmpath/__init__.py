"""Exact and suboptimal regularization paths for the SVM dual."""

from .dataset import Dataset, KernelSpec, build_q, parse_libsvm, scale_features
from .errors import InputError, NumericalError, SvmPathError
from .oracle import enumerate_partitions_exact, initialize_path, solve_dual_reference
from .partition import Partition, Tolerances, check_exact, check_relaxed
from .state import PathState
from .tracer import PathProblem, trace

__all__ = [
    "Dataset", "KernelSpec", "build_q", "parse_libsvm", "scale_features",
    "InputError", "NumericalError", "SvmPathError",
    "enumerate_partitions_exact", "initialize_path", "solve_dual_reference",
    "Partition", "Tolerances", "check_exact", "check_relaxed",
    "PathState", "PathProblem", "trace",
]

"""Estimators for nested expectations E_Y f(E[X | Y]).

The main entry points are :func:`sparse_grid_estimate`, which combines value
partitions at every depth with index-partition corrections, the single-depth
:func:`simple_estimate`, and the :func:`nested_mc_estimate` baseline. The
:mod:`nestmc.harness` module runs replicated MSE experiments on the two
bundled test problems.
"""

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    InnerSamplerUnavailable,
    InvalidParameter,
    LevelOutOfRange,
    MissingTruth,
    NestMCError,
    NotPositiveDefinite,
    NotPowerOfTwo,
)
from .estimators import (
    EstimateRecord,
    OuterFunction,
    level_terms,
    max_outer,
    nested_mc_estimate,
    simple_estimate,
    sparse_grid_estimate,
)
from .harness import (
    ExperimentConfig,
    ReferenceSpec,
    RunReport,
    convergence_slope,
    reference_value,
    run_experiment,
)
from .partition import PartitionPlan, SampleBatch, build_partitions, rank_transform, width_diagnostic
from .problems import NestedProblem, Problem1Spec, Problem2Spec, build_problem, problem1, problem2
from .sampling import RngStream, make_stream, substream

__all__ = [
    "DegenerateInput", "DimensionMismatch", "InnerSamplerUnavailable", "InvalidParameter",
    "LevelOutOfRange", "MissingTruth", "NestMCError", "NotPositiveDefinite", "NotPowerOfTwo",
    "EstimateRecord", "OuterFunction", "level_terms", "max_outer", "nested_mc_estimate",
    "simple_estimate", "sparse_grid_estimate",
    "ExperimentConfig", "ReferenceSpec", "RunReport", "convergence_slope", "reference_value", "run_experiment",
    "PartitionPlan", "SampleBatch", "build_partitions", "rank_transform", "width_diagnostic",
    "NestedProblem", "Problem1Spec", "Problem2Spec", "build_problem", "problem1", "problem2",
    "RngStream", "make_stream", "substream",
]

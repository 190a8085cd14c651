"""Heterogeneous Monte Carlo option pricing with makespan-optimal partitioning."""

from .allocator import MetricModels, brute_force, build_cost_matrix, frontier, objective, optimize
from .errors import (
    DegenerateModelError,
    HetpriceError,
    InfeasibleError,
    InsufficientPathsError,
    InstanceTooLargeError,
    MissingModelError,
    NoFeasiblePointError,
    ValidationError,
)
from .findomain import (
    AsianArithmetic,
    BarrierKnockOut,
    BlackScholes,
    European,
    Heston,
    Portfolio,
    PricingTask,
    parse_task_file,
    serialize_portfolio,
)
from .mcengine import Estimate, PartialResult, estimate, merge, payoff, run_chunk
from .metrics import (
    BenchmarkObservation,
    ConfidenceModel,
    LatencyModel,
    benchmark,
    fit_confidence,
    fit_latency,
    predict_latency,
    required_paths,
)
from .orchestrator import RunReport, run, select_tradeoff
from .platforms import LocalCpu, PlatformRegistry, Simulated, execute, load_registry, load_table1

__version__ = "0.1.0"

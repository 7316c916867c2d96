"""Discrete minimum-variance portfolios on a budget-preserving variational ansatz."""

__version__ = "0.1.0"

from .encoding import EncodingSpec, feasible_count, enumerate_feasible
from .market import CovarianceMatrix, load_prices, compute_covariance
from .hamiltonian import CostModel, build_cost_model
from .circuits import AnsatzConfig, FeasibleAnsatz, run_ansatz
from .metrics import ground_truth, MetricReport

__all__ = [
    "EncodingSpec",
    "feasible_count",
    "enumerate_feasible",
    "CovarianceMatrix",
    "load_prices",
    "compute_covariance",
    "CostModel",
    "build_cost_model",
    "AnsatzConfig",
    "FeasibleAnsatz",
    "run_ansatz",
    "ground_truth",
    "MetricReport",
]

"""Low-rank CP approximation with columnwise orthonormal factors (epsilon-ALS)."""
from .estimator import OrthogonalCPD
from .exceptions import OtapError
from .harness import ExperimentSpec, gen_synthetic, rel_err, run_experiment, uniqueness_check
from .initializers import get_initializer, random_init, rank1_approx
from .model import FactorSet, feasibility_check, kkt_residual, objective_G, objective_H
from .solver import SolverConfig, run
from .tensor import DenseTensor, read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "DenseTensor",
    "ExperimentSpec",
    "FactorSet",
    "OrthogonalCPD",
    "OtapError",
    "SolverConfig",
    "feasibility_check",
    "gen_synthetic",
    "get_initializer",
    "kkt_residual",
    "objective_G",
    "objective_H",
    "random_init",
    "rank1_approx",
    "read_tensor",
    "rel_err",
    "run",
    "run_experiment",
    "uniqueness_check",
    "write_tensor",
]

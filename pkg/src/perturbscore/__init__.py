"""Score tests for a perturbation component, calibrated by the tube formula."""

from .covariance import CovarianceKernel, cov_fixed, cov_nuisance, cov_vector, corr, fisher_info
from .estimators import ScoreTest, SequentialMixture
from .exceptions import (ConfigError, DataError, DomainError, NumericalError, PerturbScoreError,
                         SingularityError, SupportViolationError, ValidationError)
from .families import (Binomial2, ExponentialFamily, MultivariateNormal, Normal, Poisson, density_eval,
                       get_family)
from .geometry import (ManifoldSummary, Singularity, TubeConstants, critical_value, detect_singularities, ell0,
                       kappa0, manifold_summary, tail_probability, tube_constants)
from .model import (Box, Disk, MixingDistribution, NullModel, PerturbationModel, log_density_grad,
                    mixture_density, sample)
from .oracle import TailCurve, lrt_equivalence_report, mc_null_distribution, mc_sup_tail
from .score import (ProcessEvaluation, TestOutcome, eta_hat, fit_full, fit_weights, lrt_profile, run_test,
                    score_process, score_process_nuisance, sequential_build, statistic)

__version__ = "0.1.0"

__all__ = [
    "Binomial2", "Box", "ConfigError", "CovarianceKernel", "DataError", "Disk", "DomainError",
    "ExponentialFamily", "ManifoldSummary", "MixingDistribution", "MultivariateNormal", "Normal", "NullModel",
    "NumericalError", "PerturbScoreError", "PerturbationModel", "Poisson", "ProcessEvaluation", "ScoreTest",
    "SequentialMixture", "Singularity", "SingularityError", "SupportViolationError", "TailCurve", "TestOutcome",
    "TubeConstants", "ValidationError", "corr", "cov_fixed", "cov_nuisance", "cov_vector", "critical_value",
    "density_eval", "detect_singularities", "ell0", "eta_hat", "fisher_info", "fit_full", "fit_weights",
    "get_family", "kappa0", "log_density_grad", "lrt_equivalence_report", "lrt_profile", "manifold_summary",
    "mc_null_distribution", "mc_sup_tail", "mixture_density", "run_test", "sample", "score_process",
    "score_process_nuisance", "sequential_build", "statistic", "tail_probability", "tube_constants",
]

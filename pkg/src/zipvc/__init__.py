"""Variance-component association tests for zero-inflated count outcomes.

The package fits a zero-inflated Poisson null model with covariates, forms
score residuals for the mixture and rate components, and tests a SNP set
through quadratic-form statistics whose null law is calibrated by
perturbation resampling. Marginal, min-p, Fisher, and standardized omnibus
p-values are reported, alongside Wald-style comparators and a simulation
engine for size and power studies.

Convention used throughout: ``pi`` is the probability of the susceptible
(Poisson) component, so ``1 - pi`` is the structural-zero probability.
"""

__version__ = "0.1.0"

from .comparators import WaldResult, wald_poisson_hw, wald_zip, zip_wald_all
from .data import (
    Dataset,
    PruneReport,
    ld_prune,
    load_dataset,
    make_dataset,
    save_dataset,
)
from .errors import (
    BoundaryError,
    ConvergenceError,
    InputError,
    NumericalError,
    ZipvcError,
)
from .omnibus import (
    TestReport,
    fisher_pvalue,
    marginal_pvalues,
    minp_pvalue,
    run_test,
    standardized_statistic,
)
from .quadform import MixtureSpec, imhof_tail, psd_eigenvalues
from .resample import PerturbationSet, draw_weights, perturb
from .rng import make_stream
from .scores import (
    Basis,
    BasisSpec,
    ScoreResult,
    build_basis,
    residual_lambda,
    residual_pi,
    score_residuals,
    score_statistics,
)
from .simulate import (
    GenotypeProfile,
    SimConfig,
    StudyResult,
    gen_covariates,
    gen_genotypes,
    gen_outcome,
    load_profile,
    load_sim_config,
    replicate_dataset,
    run_study,
)
from .zipfit import FitConfig, NullFit, fit_null, fit_zip, loglik

__all__ = [
    "__version__",
    "Basis",
    "BasisSpec",
    "BoundaryError",
    "ConvergenceError",
    "Dataset",
    "FitConfig",
    "GenotypeProfile",
    "InputError",
    "MixtureSpec",
    "NullFit",
    "NumericalError",
    "PerturbationSet",
    "PruneReport",
    "ScoreResult",
    "SimConfig",
    "StudyResult",
    "TestReport",
    "WaldResult",
    "ZipvcError",
    "build_basis",
    "draw_weights",
    "fisher_pvalue",
    "fit_null",
    "fit_zip",
    "gen_covariates",
    "gen_genotypes",
    "gen_outcome",
    "imhof_tail",
    "ld_prune",
    "load_dataset",
    "load_profile",
    "load_sim_config",
    "loglik",
    "make_dataset",
    "make_stream",
    "marginal_pvalues",
    "minp_pvalue",
    "perturb",
    "psd_eigenvalues",
    "replicate_dataset",
    "residual_lambda",
    "residual_pi",
    "run_study",
    "run_test",
    "save_dataset",
    "score_residuals",
    "score_statistics",
    "standardized_statistic",
    "wald_poisson_hw",
    "wald_zip",
    "zip_wald_all",
]

"""Baseline Wald tests: ZIP alternative-model Wald and robust Poisson Wald.

Both comparators prune the genotype matrix at |correlation| 0.99 before
fitting, because the alternative fits break down under near-collinear SNPs;
the variance-component tests never prune. The ZIP Wald tests include the
pruned genotypes in both linear predictors and test the genotype blocks with
the inverse observed information; the Poisson comparator uses the Huber-White
sandwich covariance.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .data import ld_prune
from .errors import InputError, NumericalError
from .zipfit import FitConfig, fit_zip, poisson_glm

PRUNE_THRESHOLD = 0.99


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    degrees_of_freedom: int
    p_value: float
    which: str
    columns_used: int


def wald_zip(dataset, which="joint", config=None, threshold=PRUNE_THRESHOLD):
    """Multivariate Wald test of the genotype coefficients in a ZIP fit.

    Parameters
    ----------
    dataset : Dataset
    which : str
        "pi", "lambda", or "joint".
    config : FitConfig, optional
    threshold : float
        LD pruning threshold applied before fitting.

    Returns
    -------
    WaldResult
    """
    if which not in ("pi", "lambda", "joint"):
        raise InputError(f"unknown Wald component {which!r}")
    return zip_wald_all(dataset, config=config, threshold=threshold)[which]


def zip_wald_all(dataset, config=None, threshold=PRUNE_THRESHOLD,
                 drop_cross_block=False):
    """All three ZIP Wald tests from a single alternative fit.

    ``drop_cross_block`` zeroes the covariance between the pi and lambda
    coefficient blocks before forming the joint statistic (diagnostic hook;
    the joint statistic then equals the sum of the marginal ones).
    """
    config = config or FitConfig()
    G, report = _pruned_genotypes(dataset, threshold)
    pg = G.shape[1]
    X_aug = np.column_stack([dataset.covariates, G]) if dataset.q else G
    fit = fit_zip(dataset.y, X_aug, config=config)

    m = X_aug.shape[1] + 1  # per-block coefficient count, intercept included
    idx_pi = np.arange(m - pg, m)
    idx_lambda = m + idx_pi
    try:
        cov = np.linalg.inv(fit.info)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular information matrix: {exc}") from exc
    gamma_pi = fit.beta_pi[-pg:]
    gamma_lambda = fit.beta_lambda[-pg:]

    out = {}
    for which, sel, gamma in (
        ("pi", idx_pi, gamma_pi),
        ("lambda", idx_lambda, gamma_lambda),
        ("joint", np.concatenate([idx_pi, idx_lambda]),
         np.concatenate([gamma_pi, gamma_lambda])),
    ):
        V = cov[np.ix_(sel, sel)]
        if drop_cross_block and which == "joint":
            V = V.copy()
            V[:pg, pg:] = 0.0
            V[pg:, :pg] = 0.0
        stat = _wald_statistic(gamma, V)
        dof = sel.size
        out[which] = WaldResult(
            statistic=stat,
            degrees_of_freedom=dof,
            p_value=float(chi2.sf(stat, dof)),
            which=which,
            columns_used=pg,
        )
    return out


def wald_poisson_hw(dataset, threshold=PRUNE_THRESHOLD):
    """Poisson Wald test of the genotype block with sandwich variance.

    Fits a log-link Poisson regression on (intercept, covariates, pruned
    genotypes) and tests the genotype coefficients using the Huber-White
    covariance A^{-1} B A^{-1}, where A is the model information and B the
    outer product of per-observation scores.
    """
    G, report = _pruned_genotypes(dataset, threshold)
    pg = G.shape[1]
    n = dataset.n
    Xd = np.column_stack([np.ones(n), dataset.covariates, G])
    beta = poisson_glm(Xd, dataset.y)
    lam = np.exp(Xd @ beta)
    resid = dataset.y - lam
    A = (Xd * lam[:, None]).T @ Xd
    Bmat = (Xd * (resid**2)[:, None]).T @ Xd
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular Poisson information: {exc}") from exc
    cov = A_inv @ Bmat @ A_inv
    sel = np.arange(Xd.shape[1] - pg, Xd.shape[1])
    stat = _wald_statistic(beta[sel], cov[np.ix_(sel, sel)])
    return WaldResult(
        statistic=stat,
        degrees_of_freedom=pg,
        p_value=float(chi2.sf(stat, pg)),
        which="poisson_hw",
        columns_used=pg,
    )


def _pruned_genotypes(dataset, threshold):
    report = ld_prune(dataset.genotypes, threshold, names=dataset.genotype_names)
    return dataset.genotypes[:, report.kept], report


def _wald_statistic(gamma, V):
    try:
        stat = float(gamma @ np.linalg.solve(V, gamma))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular Wald covariance: {exc}") from exc
    if not np.isfinite(stat) or stat < 0:
        raise NumericalError("Wald statistic is not a non-negative number")
    return stat

"""Marginal and combined p-values calibrated by the perturbation draws.

The pi and lambda statistics each get an Imhof mixture p-value from the
eigenvalues of their covariance block. Two omnibus combinations (min-p and
Fisher) are calibrated against the same combination applied to every
resampling draw, and a third statistic rescales each block by its trace
before summing.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .quadform import P_FLOOR, imhof_tail, psd_eigenvalues
from .resample import perturb
from .scores import BasisSpec, build_basis, score_statistics
from .zipfit import FitConfig, fit_null

# Fixed methodological notes carried in every report.
_NOTES = (
    "empirical omnibus p-values use the add-one rule (1 + count) / (B + 1)",
    "p_std reference law: eigenvalues of the trace-rescaled resampled covariance",
)


@dataclass
class TestReport:
    """Everything the CLI writes for a single SNP-set test."""

    p_pi: float
    p_lambda: float
    p_min: float
    p_fisher: float
    p_std: float
    q_pi: float
    q_lambda: float
    q_std: float
    sigma2_pi: float
    sigma2_lambda: float
    n: int
    p: int
    q: int
    K: int
    B: int
    seed: object
    basis: dict
    warnings: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "p_pi": self.p_pi,
            "p_lambda": self.p_lambda,
            "p_min": self.p_min,
            "p_fisher": self.p_fisher,
            "p_std": self.p_std,
            "q_pi": self.q_pi,
            "q_lambda": self.q_lambda,
            "q_std": self.q_std,
            "sigma2_pi": self.sigma2_pi,
            "sigma2_lambda": self.sigma2_lambda,
            "n": self.n,
            "p": self.p,
            "q": self.q,
            "K": self.K,
            "B": self.B,
            "seed": self.seed,
            "basis": self.basis,
            "warnings": list(self.warnings),
            "manifest": self.manifest,
        }


def marginal_pvalues(score_result, perturbation_set, rel_tol=1e-10):
    """Imhof p-values of Q_pi and Q_lambda under their block eigenvalues."""
    mix_pi = psd_eigenvalues(perturbation_set.sigma_pi, rel_tol)
    mix_lambda = psd_eigenvalues(perturbation_set.sigma_lambda, rel_tol)
    return (
        imhof_tail(score_result.q_pi, mix_pi),
        imhof_tail(score_result.q_lambda, mix_lambda),
    )


def draw_pvalues(perturbation_set, mix_pi, mix_lambda):
    """Per-draw (p_pi, p_lambda) pairs, B x 2.

    Each draw's quadratic forms are referred to the same block eigenvalues as
    the observed statistics; the covariance is not re-estimated per draw.
    """
    q = perturbation_set.q_draws
    out = np.empty_like(q)
    for b in range(q.shape[0]):
        out[b, 0] = imhof_tail(q[b, 0], mix_pi)
        out[b, 1] = imhof_tail(q[b, 1], mix_lambda)
    return out


def minp_pvalue(p_pi, p_lambda, perturbation_set, draws=None):
    """Resampling-calibrated p-value of min(p_pi, p_lambda).

    Uses the add-one empirical rule (1 + count) / (B + 1), so the smallest
    attainable value is 1 / (B + 1).
    """
    if draws is None:
        draws = _default_draws(perturbation_set)
    observed = min(p_pi, p_lambda)
    count = int(np.sum(draws.min(axis=1) <= observed))
    return (1 + count) / (perturbation_set.B + 1)


def fisher_pvalue(p_pi, p_lambda, perturbation_set, draws=None):
    """Resampling-calibrated p-value of log(p_pi) + log(p_lambda)."""
    if draws is None:
        draws = _default_draws(perturbation_set)
    observed = np.log(p_pi) + np.log(p_lambda)
    stat = np.log(draws[:, 0]) + np.log(draws[:, 1])
    count = int(np.sum(stat <= observed))
    return (1 + count) / (perturbation_set.B + 1)


def standardized_statistic(score_result, perturbation_set, rel_tol=1e-10):
    """Trace-standardized combination of the two statistics.

    q_std = Q_pi / sigma2_pi + Q_lambda / sigma2_lambda with
    sigma2_iota = trace of the iota covariance block. Its reference law uses
    the eigenvalues of D^{-1} Sigma D^{-1} where D rescales each block by
    sqrt(sigma2_iota), i.e. the covariance of the jointly rescaled score.
    """
    sigma2_pi = float(np.trace(perturbation_set.sigma_pi))
    sigma2_lambda = float(np.trace(perturbation_set.sigma_lambda))
    if sigma2_pi <= 0 or sigma2_lambda <= 0:
        raise NumericalError("degenerate covariance block: non-positive trace")
    q_std = score_result.q_pi / sigma2_pi + score_result.q_lambda / sigma2_lambda
    K = perturbation_set.K
    d = np.concatenate(
        [np.full(K, np.sqrt(sigma2_pi)), np.full(K, np.sqrt(sigma2_lambda))]
    )
    rescaled = perturbation_set.sigma_hat / np.outer(d, d)
    p_std = imhof_tail(q_std, psd_eigenvalues(rescaled, rel_tol))
    return q_std, p_std


def run_test(dataset, basis_spec=None, B=1000, seed=0, config=None):
    """Full pipeline: fit, score, resample, combine.

    Parameters
    ----------
    dataset : Dataset
    basis_spec : BasisSpec, optional
        Defaults to the identity basis Psi(G) = G.
    B : int
        Number of perturbation draws.
    seed : int or tuple of int
        Resampling stream key.
    config : FitConfig, optional

    Returns
    -------
    TestReport
    """
    basis_spec = basis_spec or BasisSpec()
    config = config or FitConfig()
    fit = fit_null(dataset, None, config)
    basis = build_basis(dataset.genotypes, basis_spec)
    sr = score_statistics(fit, dataset, basis)
    pset = perturb(dataset, basis, fit, B, seed, config)

    mix_pi = psd_eigenvalues(pset.sigma_pi)
    mix_lambda = psd_eigenvalues(pset.sigma_lambda)
    p_pi = imhof_tail(sr.q_pi, mix_pi)
    p_lambda = imhof_tail(sr.q_lambda, mix_lambda)
    draws = draw_pvalues(pset, mix_pi, mix_lambda)
    p_min = minp_pvalue(p_pi, p_lambda, pset, draws)
    p_fisher = fisher_pvalue(p_pi, p_lambda, pset, draws)
    q_std, p_std = standardized_statistic(sr, pset)

    warnings = list(_NOTES)
    if pset.refit_failures:
        warnings.append(f"{pset.refit_failures} resampling refits were redrawn")
    clamped = [
        name
        for name, value in (("p_pi", p_pi), ("p_lambda", p_lambda), ("p_std", p_std))
        if value <= P_FLOOR
    ]
    if clamped:
        warnings.append("p-value at the 1e-12 reporting floor: " + ", ".join(clamped))

    return TestReport(
        p_pi=p_pi,
        p_lambda=p_lambda,
        p_min=p_min,
        p_fisher=p_fisher,
        p_std=p_std,
        q_pi=sr.q_pi,
        q_lambda=sr.q_lambda,
        q_std=q_std,
        sigma2_pi=float(np.trace(pset.sigma_pi)),
        sigma2_lambda=float(np.trace(pset.sigma_lambda)),
        n=dataset.n,
        p=dataset.p,
        q=dataset.q,
        K=basis.K,
        B=B,
        seed=seed,
        basis=basis_spec.describe(),
        warnings=warnings,
    )


def _default_draws(perturbation_set):
    mix_pi = psd_eigenvalues(perturbation_set.sigma_pi)
    mix_lambda = psd_eigenvalues(perturbation_set.sigma_lambda)
    return draw_pvalues(perturbation_set, mix_pi, mix_lambda)

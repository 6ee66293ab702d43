"""Perturbation resampling for the null distribution of the score vectors.

Each draw reweights every observation by an independent Exponential(1)
variable, refits the null model under those weights, and recomputes the score
vector with the same weights:

    S_iota^(b) = (sum_i V_i^(b))^{-1} sum_i r_iota,i^(b) Psi(G_i) V_i^(b).

The centered, root-n-scaled draws sqrt(n) (S^(b) - S) estimate the joint null
covariance of the score vector, which feeds the mixture p-values.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .rng import make_stream
from .scores import score_residuals, score_statistics
from .zipfit import FitConfig, fit_zip

log = logging.getLogger(__name__)

_MAX_ATTEMPTS = 10


@dataclass
class PerturbationSet:
    """Resampling draws and the covariance estimate built from them.

    ``b_draws`` stacks sqrt(n) (S^(b) - S) with the pi block first, so
    ``sigma_hat`` is the 2K x 2K sample covariance with block layout
    [[pi.pi, pi.lambda], [lambda.pi, lambda.lambda]].
    """

    b_draws: np.ndarray
    q_draws: np.ndarray
    sigma_hat: np.ndarray
    seed: object
    B: int
    refit_failures: int

    @property
    def K(self):
        return self.b_draws.shape[1] // 2

    @property
    def sigma_pi(self):
        return self.sigma_hat[: self.K, : self.K]

    @property
    def sigma_lambda(self):
        return self.sigma_hat[self.K :, self.K :]


def draw_weights(n, seed, b, attempt=0):
    """n i.i.d. Exponential(1) weights from the stream keyed (seed, b, attempt).

    The keying is counter-based, so draws are reproducible and independent of
    evaluation order.
    """
    if n < 1:
        raise InputError("n must be at least 1")
    return make_stream(seed, b, attempt).standard_exponential(n)


def perturb(dataset, basis, null_fit, B, seed, config=None, weights_hook=None):
    """Run B perturbation draws and estimate the score covariance.

    Parameters
    ----------
    dataset : Dataset
    basis : Basis
        Feature map used for the observed statistic.
    null_fit : NullFit
        Converged all-ones-weights fit; refits warm-start at its estimates.
    B : int
        Number of draws, at least 100.
    seed : int or tuple of int
        Stream key prefix.
    config : FitConfig, optional
        Refit settings; defaults to the settings used for the main fit.
    weights_hook : callable, optional
        Test hook with signature (n, seed, b, attempt) -> weights, replacing
        the exponential draw.

    Returns
    -------
    PerturbationSet

    Notes
    -----
    A draw whose refit fails is redrawn on a fresh keyed substream, up to 10
    attempts; more than 1% failed attempts in total aborts.
    """
    if B < 100:
        raise InputError("B must be at least 100")
    config = config or FitConfig()
    n = dataset.n
    psi = basis.psi
    K = psi.shape[1]
    observed = score_statistics(null_fit, dataset, basis)
    s_hat = np.concatenate([observed.s_pi, observed.s_lambda])
    init = (null_fit.beta_pi, null_fit.beta_lambda)
    draw = weights_hook or draw_weights

    b_draws = np.empty((B, 2 * K))
    q_draws = np.empty((B, 2))
    failures = 0
    sqrt_n = np.sqrt(n)
    for b in range(B):
        for attempt in range(_MAX_ATTEMPTS):
            w = draw(n, seed, b, attempt)
            try:
                refit = fit_zip(
                    dataset.y, dataset.covariates, weights=w, config=config, init=init
                )
            except NumericalError:
                failures += 1
                if failures > 0.01 * B:
                    raise NumericalError(
                        f"more than 1% of resampling refits failed "
                        f"({failures} failures by draw {b})"
                    )
                continue
            break
        else:
            raise NumericalError(
                f"resampling draw {b} failed {_MAX_ATTEMPTS} refit attempts"
            )
        r_pi, r_lambda = score_residuals(dataset.y, refit.pi0, refit.lambda0)
        wsum = w.sum()
        s_b = np.concatenate([psi.T @ (r_pi * w), psi.T @ (r_lambda * w)]) / wsum
        centered = s_b - s_hat
        b_draws[b] = sqrt_n * centered
        q_draws[b, 0] = n * float(centered[:K] @ centered[:K])
        q_draws[b, 1] = n * float(centered[K:] @ centered[K:])

    mean = b_draws.mean(axis=0)
    dev = b_draws - mean
    sigma_hat = dev.T @ dev / (B - 1)
    if failures:
        log.info("perturbation resampling redrew %d failed refits", failures)
    return PerturbationSet(
        b_draws=b_draws,
        q_draws=q_draws,
        sigma_hat=sigma_hat,
        seed=seed,
        B=B,
        refit_failures=failures,
    )

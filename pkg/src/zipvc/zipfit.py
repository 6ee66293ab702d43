"""Weighted maximum-likelihood fitting of the zero-inflated Poisson null model.

The outcome is a mixture: with probability ``1 - pi`` a structural zero, with
probability ``pi`` a Poisson(lambda) draw. Both parameters carry their own
linear predictor over the covariates,

    logit(pi_i) = x_i' beta_pi,    log(lambda_i) = x_i' beta_lambda,

with an intercept always prepended internally. Note that ``pi`` is the
probability of the susceptible (Poisson) component; several other ZIP
implementations parameterize the zero-inflation probability instead.

Two optimizers are provided. The default is EM over the latent susceptibility
indicator, whose M-step splits into a weighted logistic regression and a
weighted Poisson regression; one damped Newton step per component suffices
for monotone ascent, so that is what each iteration takes. It is robust far
from the optimum. A full Newton iteration with backtracking line search is
available for speed near the optimum. Both converge on the max-norm of the
weighted score.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln, log_expit, logit, xlogy

from .errors import BoundaryError, ConvergenceError, InputError

log = logging.getLogger(__name__)

# log(lambda) is capped during iteration so Poisson weights stay finite.
_T_MAX = 30.0


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings for the ZIP fit.

    Attributes
    ----------
    max_iterations : int
        Outer iteration cap.
    tolerance : float
        Convergence threshold on the max-norm of the weighted score per unit
        of total weight, so neither the sample size nor a common rescaling
        of the weights moves the stopping point.
    eps : float
        Boundary guard: fitted probabilities are clamped to
        [eps, 1 - eps] inside iterations, and a converged fit resting on the
        clamp is rejected.
    method : str
        "em" (default) or "newton".
    """

    max_iterations: int = 200
    tolerance: float = 1e-8
    eps: float = 1e-10
    method: str = "em"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise InputError("tolerance must be positive")
        if not 0 < self.eps < 0.5:
            raise InputError("eps must be in (0, 0.5)")
        if self.method not in ("em", "newton"):
            raise InputError(f"unknown optimizer {self.method!r}")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be at least 1")


@dataclass
class NullFit:
    """Result of a (weighted) ZIP maximum-likelihood fit.

    ``info`` is the observed information of the weighted log-likelihood at
    the optimum, ordered as (beta_pi, beta_lambda) with intercepts first.
    """

    beta_pi: np.ndarray
    beta_lambda: np.ndarray
    pi0: np.ndarray
    lambda0: np.ndarray
    loglik: float
    info: np.ndarray
    converged: bool
    iterations: int
    weights_used: np.ndarray
    gradient_norm: float
    loglik_trace: list = field(default_factory=list, repr=False)


def loglik(y, pi, lam):
    """Log-likelihood of the ZIP mixture, elementwise.

    Stable evaluation: the zero branch uses log-sum-exp over the structural
    and Poisson zero masses, the positive branch uses the log-gamma form of
    the Poisson term. ``pi = 0`` with a positive count gives ``-inf``.

    Parameters
    ----------
    y : int or array_like
        Non-negative counts.
    pi : float or array_like
        Susceptible-component probability in [0, 1].
    lam : float or array_like
        Poisson rate, strictly positive.

    Returns
    -------
    float or numpy.ndarray
    """
    y = np.asarray(y)
    pi = np.asarray(pi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise InputError("lambda must be positive")
    if np.any((pi < 0) | (pi > 1)):
        raise InputError("pi must lie in [0, 1]")
    if np.any(y < 0) or np.any(np.mod(y, 1) != 0):
        raise InputError("counts must be non-negative integers")
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_1mpi = np.log1p(-pi)
    out = np.where(
        y == 0,
        np.logaddexp(log_1mpi, log_pi - lam),
        log_pi + xlogy(y, lam) - lam - gammaln(y + 1.0),
    )
    if out.ndim == 0:
        return float(out)
    return out


def fit_null(dataset, weights=None, config=None):
    """Fit the null ZIP model (covariates only) for a dataset.

    Thin wrapper over :func:`fit_zip` using ``dataset.y`` and
    ``dataset.covariates``.
    """
    return fit_zip(dataset.y, dataset.covariates, weights=weights, config=config)


def fit_zip(y, X, weights=None, config=None, init=None, track_loglik=False):
    """Weighted ZIP maximum-likelihood fit on raw arrays.

    Parameters
    ----------
    y : array_like
        Non-negative integer counts, length n.
    X : array_like
        n x q covariate matrix WITHOUT an intercept column (q may be 0).
    weights : array_like, optional
        Non-negative observation weights, not all zero. Default all ones.
    config : FitConfig, optional
    init : tuple of (beta_pi, beta_lambda), optional
        Warm start; default is a deterministic recipe (Poisson fit on the
        positive subsample for beta_lambda, a matched intercept for beta_pi).
    track_loglik : bool
        Record the weighted log-likelihood at each outer iteration in
        ``loglik_trace`` (EM diagnostics).

    Returns
    -------
    NullFit
    """
    config = config or FitConfig()
    y = np.asarray(y)
    if np.any(y < 0) or np.any(np.mod(y, 1) != 0):
        raise InputError("counts must be non-negative integers")
    y = y.astype(np.int64)
    n = y.shape[0]
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise InputError("covariate rows do not match the outcome length")
    Xd = np.column_stack([np.ones(n), X]) if X.shape[1] else np.ones((n, 1))
    if np.linalg.matrix_rank(Xd) < Xd.shape[1]:
        raise InputError("design matrix is rank deficient after adding intercept")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise InputError("weights must have length n")
        if np.any(w < 0) or not np.any(w > 0):
            raise InputError("weights must be non-negative and not all zero")
    if not np.any(y > 0):
        raise BoundaryError(
            "all counts are zero: the likelihood increases as pi -> 0, "
            "so no interior MLE exists"
        )

    if init is None:
        beta_pi, beta_lambda = _initial_beta(Xd, y, w, config)
    else:
        beta_pi = np.array(init[0], dtype=float)
        beta_lambda = np.array(init[1], dtype=float)
        if beta_pi.shape != (Xd.shape[1],) or beta_lambda.shape != (Xd.shape[1],):
            raise InputError("init vectors do not match the design dimension")

    # The score sums one term per unit of weight, so the threshold scales
    # with the total weight; a common positive rescaling of the weights then
    # leaves the fit path identical.
    tol_eff = config.tolerance * max(1.0, w.sum())

    if config.method == "em":
        beta_pi, beta_lambda, iters, gnorm, trace = _fit_em(
            Xd, y, w, beta_pi, beta_lambda, config, tol_eff, track_loglik
        )
    else:
        beta_pi, beta_lambda, iters, gnorm, trace = _fit_newton(
            Xd, y, w, beta_pi, beta_lambda, config, tol_eff, track_loglik
        )

    s = Xd @ beta_pi
    t = Xd @ beta_lambda
    pi = expit(s)
    if np.any(pi <= config.eps) or np.any(pi >= 1.0 - config.eps):
        raise BoundaryError(
            "fitted pi rests on the boundary guard; the mixture probability "
            "is not identified in the interior for these data"
        )
    if np.any(t >= _T_MAX - 1e-9):
        raise BoundaryError("fitted log(lambda) rests on the overflow cap")
    lam = np.exp(t)
    total = float(w @ _loglik_terms(y, pi, lam))
    return NullFit(
        beta_pi=beta_pi,
        beta_lambda=beta_lambda,
        pi0=pi,
        lambda0=lam,
        loglik=total,
        info=_information(Xd, y, w, pi, lam),
        converged=True,
        iterations=iters,
        weights_used=w,
        gradient_norm=gnorm,
        loglik_trace=trace,
    )


def poisson_glm(X, y, weights=None, beta0=None, tol=1e-10, max_iter=50):
    """Weighted Poisson regression with log link by Newton iteration.

    ``X`` is the full design including any intercept column. Returns the
    coefficient vector. Used for the ZIP M-step, initialization, and the
    robust-variance comparator.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if beta0 is None:
        beta = np.zeros(m)
        mean_y = max(np.average(y, weights=w) if w.sum() > 0 else 1.0, 1e-8)
        beta[0] = np.log(mean_y)
    else:
        beta = np.array(beta0, dtype=float)
    scale = max(1.0, w.sum())
    ll = -np.inf
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -_T_MAX, _T_MAX)
        lam = np.exp(eta)
        grad = X.T @ (w * (y - lam))
        if np.max(np.abs(grad)) <= tol * scale:
            return beta
        H = (X * (w * lam)[:, None]).T @ X
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + 1e-8 * np.trace(H) / m * np.eye(m), grad)
        # Halve the step until the (concave) objective improves.
        ll = float(w @ (y * eta - lam))
        alpha = 1.0
        for _ in range(40):
            cand = beta + alpha * step
            eta_c = np.clip(X @ cand, -_T_MAX, _T_MAX)
            ll_c = float(w @ (y * eta_c - np.exp(eta_c)))
            if ll_c >= ll:
                beta = cand
                break
            alpha *= 0.5
        else:
            return beta
    eta = np.clip(X @ beta, -_T_MAX, _T_MAX)
    grad = X.T @ (w * (y - np.exp(eta)))
    if np.max(np.abs(grad)) <= 1e-6 * scale:
        return beta
    raise ConvergenceError(
        "Poisson regression did not converge",
        gradient_norm=float(np.max(np.abs(grad))),
        iterations=max_iter,
    )


def logistic_glm(X, z, weights=None, beta0=None, tol=1e-10, max_iter=50):
    """Weighted logistic regression by Newton iteration.

    Accepts fractional responses ``z`` in [0, 1] (the EM posterior weights).
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    n, m = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    beta = np.zeros(m) if beta0 is None else np.array(beta0, dtype=float)
    scale = max(1.0, w.sum())
    for _ in range(max_iter):
        mu = expit(X @ beta)
        grad = X.T @ (w * (z - mu))
        if np.max(np.abs(grad)) <= tol * scale:
            return beta
        wmu = np.maximum(w * mu * (1.0 - mu), 1e-300)
        H = (X * wmu[:, None]).T @ X
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + 1e-8 * np.trace(H) / m * np.eye(m), grad)
        # Cap the Newton step; separation drifts off gently instead of
        # overflowing, and the outer boundary check reports it.
        norm = np.max(np.abs(step))
        if norm > 10.0:
            step *= 10.0 / norm
        beta = beta + step
    return beta


# ---------------------------------------------------------------------------
# internals

def _solve_newton(H, grad, m):
    try:
        return np.linalg.solve(H, grad)
    except np.linalg.LinAlgError:
        return np.linalg.solve(H + 1e-8 * np.trace(H) / m * np.eye(m), grad)


def _logistic_step(Xd, z, w, beta):
    """One damped Newton ascent step of the weighted Bernoulli objective."""
    eta = Xd @ beta
    mu = expit(eta)
    grad = Xd.T @ (w * (z - mu))
    wmu = np.maximum(w * mu * (1.0 - mu), 1e-300)
    H = (Xd * wmu[:, None]).T @ Xd
    step = _solve_newton(H, grad, Xd.shape[1])

    def obj(b):
        e = Xd @ b
        return float(w @ (z * log_expit(e) + (1.0 - z) * log_expit(-e)))

    base = obj(beta)
    alpha = 1.0
    for _ in range(30):
        cand = beta + alpha * step
        if obj(cand) >= base:
            return cand
        alpha *= 0.5
    return beta


def _poisson_step(Xd, y, w, beta):
    """One damped Newton ascent step of the weighted Poisson objective."""
    eta = np.clip(Xd @ beta, -_T_MAX, _T_MAX)
    lam = np.exp(eta)
    grad = Xd.T @ (w * (y - lam))
    H = (Xd * (w * lam)[:, None]).T @ Xd
    step = _solve_newton(H, grad, Xd.shape[1])

    def obj(b):
        e = np.clip(Xd @ b, -_T_MAX, _T_MAX)
        return float(w @ (y * e - np.exp(e)))

    base = obj(beta)
    alpha = 1.0
    for _ in range(30):
        cand = beta + alpha * step
        if obj(cand) >= base:
            return cand
        alpha *= 0.5
    return beta


def _loglik_terms(y, pi, lam):
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_1mpi = np.log1p(-pi)
    return np.where(
        y == 0,
        np.logaddexp(log_1mpi, log_pi - lam),
        log_pi + xlogy(y, lam) - lam - gammaln(y + 1.0),
    )


def _weighted_loglik(Xd, y, w, beta_pi, beta_lambda, eps):
    pi = np.clip(expit(Xd @ beta_pi), eps, 1.0 - eps)
    lam = np.exp(np.clip(Xd @ beta_lambda, np.log(eps), _T_MAX))
    return float(w @ _loglik_terms(y, pi, lam))


def _estep(Xd, y, beta_pi, beta_lambda, eps):
    """Current (pi, lam, posterior susceptibility zhat)."""
    pi = np.clip(expit(Xd @ beta_pi), eps, 1.0 - eps)
    lam = np.exp(np.clip(Xd @ beta_lambda, np.log(eps), _T_MAX))
    e = np.exp(-lam)
    denom = (1.0 - pi) + pi * e
    zhat = np.where(y > 0, 1.0, pi * e / denom)
    return pi, lam, zhat


def _gradient(Xd, y, w, pi, lam, zhat):
    g_pi = Xd.T @ (w * (zhat - pi))
    g_lam = Xd.T @ (w * zhat * (y - lam))
    return np.concatenate([g_pi, g_lam])


def _information(Xd, y, w, pi, lam):
    """Observed information (negative Hessian) of the weighted log-likelihood
    with respect to (beta_pi, beta_lambda)."""
    e = np.exp(-lam)
    one_m_e = -np.expm1(-lam)  # 1 - exp(-lam), stable near lam = 0
    denom = (1.0 - pi) + pi * e
    u = -pi * (1.0 - pi) * one_m_e
    v = -pi * lam * e
    du_ds = -one_m_e * pi * (1.0 - pi) * (1.0 - 2.0 * pi)
    dv_dt = -pi * lam * e * (1.0 - lam)
    du_dt = -pi * (1.0 - pi) * lam * e
    l_ss0 = du_ds / denom - (u / denom) ** 2
    l_tt0 = dv_dt / denom - (v / denom) ** 2
    l_st0 = du_dt / denom - u * v / denom**2
    pos = y > 0
    l_ss = w * np.where(pos, -pi * (1.0 - pi), l_ss0)
    l_tt = w * np.where(pos, -lam, l_tt0)
    l_st = w * np.where(pos, 0.0, l_st0)
    m = Xd.shape[1]
    info = np.empty((2 * m, 2 * m))
    info[:m, :m] = -(Xd * l_ss[:, None]).T @ Xd
    info[m:, m:] = -(Xd * l_tt[:, None]).T @ Xd
    cross = -(Xd * l_st[:, None]).T @ Xd
    info[:m, m:] = cross
    info[m:, :m] = cross.T
    return (info + info.T) / 2.0


def _initial_beta(Xd, y, w, config):
    pos = y > 0
    try:
        beta_lambda = poisson_glm(Xd[pos], y[pos], w[pos])
    except (ConvergenceError, np.linalg.LinAlgError):
        beta_lambda = np.zeros(Xd.shape[1])
        beta_lambda[0] = np.log(max(np.average(y[pos], weights=w[pos]), 1e-8))
    lam = np.exp(np.clip(Xd @ beta_lambda, np.log(config.eps), _T_MAX))
    # Fraction of observed positives relative to the positive mass a pure
    # Poisson fit would predict; its logit seeds the mixture intercept.
    p_obs = np.average(pos, weights=w)
    p_pred = max(np.average(-np.expm1(-lam), weights=w), 1e-12)
    pi0 = np.clip(p_obs / p_pred, 0.02, 0.98)
    beta_pi = np.zeros(Xd.shape[1])
    beta_pi[0] = np.clip(logit(pi0), -4.0, 4.0)
    return beta_pi, beta_lambda


def _fit_em(Xd, y, w, beta_pi, beta_lambda, config, tol_eff, track):
    trace = []
    gnorm = np.inf
    for it in range(config.max_iterations + 1):
        pi, lam, zhat = _estep(Xd, y, beta_pi, beta_lambda, config.eps)
        grad = _gradient(Xd, y, w, pi, lam, zhat)
        gnorm = float(np.max(np.abs(grad)))
        if track:
            trace.append(float(w @ _loglik_terms(y, pi, lam)))
        if gnorm < tol_eff:
            return beta_pi, beta_lambda, it, gnorm, trace
        if it == config.max_iterations:
            break
        beta_pi = _logistic_step(Xd, zhat, w, beta_pi)
        beta_lambda = _poisson_step(Xd, y, w * zhat, beta_lambda)
    raise ConvergenceError(
        f"EM did not reach tolerance after {config.max_iterations} iterations "
        f"(score max-norm {gnorm:.3e})",
        gradient_norm=gnorm,
        iterations=config.max_iterations,
    )


def _fit_newton(Xd, y, w, beta_pi, beta_lambda, config, tol_eff, track):
    m = Xd.shape[1]
    beta = np.concatenate([beta_pi, beta_lambda])
    ll = _weighted_loglik(Xd, y, w, beta[:m], beta[m:], config.eps)
    trace = [ll] if track else []
    gnorm = np.inf
    for it in range(config.max_iterations + 1):
        pi, lam, zhat = _estep(Xd, y, beta[:m], beta[m:], config.eps)
        grad = _gradient(Xd, y, w, pi, lam, zhat)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < tol_eff:
            return beta[:m], beta[m:], it, gnorm, trace
        if it == config.max_iterations:
            break
        info = _information(Xd, y, w, pi, lam)
        step = None
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            pass
        if step is None or grad @ step <= 0 or not np.all(np.isfinite(step)):
            ridge = (np.trace(info) / (2 * m)) * 1e-6 + 1e-10
            step = np.linalg.solve(info + ridge * np.eye(2 * m), grad)
        alpha = 1.0
        for _ in range(40):
            cand = beta + alpha * step
            ll_c = _weighted_loglik(Xd, y, w, cand[:m], cand[m:], config.eps)
            if ll_c > ll - 1e-12:
                beta = cand
                ll = ll_c
                break
            alpha *= 0.5
        else:
            raise ConvergenceError(
                "Newton line search stalled", gradient_norm=gnorm, iterations=it
            )
        if track:
            trace.append(ll)
    raise ConvergenceError(
        f"Newton did not reach tolerance after {config.max_iterations} iterations "
        f"(score max-norm {gnorm:.3e})",
        gradient_norm=gnorm,
        iterations=config.max_iterations,
    )

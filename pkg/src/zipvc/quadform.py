"""Tail probabilities of quadratic forms in standard normal variables.

The test statistics in this package are asymptotically distributed as
``sum_k mu_k * chi2_1`` where the ``mu_k`` are eigenvalues of an estimated
covariance block. Tail probabilities are computed with Imhof's inversion
integral

    P(Q > q) = 1/2 + (1/pi) * int_0^inf sin(theta(u)) / (u * rho(u)) du,

with ``theta(u) = 0.5 * sum atan(mu_k u) - 0.5 * q u`` and
``rho(u) = prod (1 + mu_k^2 u^2)^(1/4)``, evaluated by adaptive quadrature.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.linalg import eigvalsh

from .errors import InputError, NumericalError

# Smallest reportable p-value; anything below is clamped (callers may warn).
P_FLOOR = 1e-12

_QUAD_ABS_TOL = 1e-6  # required absolute error on p itself


@dataclass(frozen=True)
class MixtureSpec:
    """Eigenvalue mixture defining a weighted chi-square distribution.

    Attributes
    ----------
    eigenvalues : numpy.ndarray
        Strictly positive weights, sorted in descending order.
    dropped : int
        Number of eigenvalues removed by truncation.
    threshold : float
        Absolute truncation threshold that was applied.
    """

    eigenvalues: np.ndarray
    dropped: int = 0
    threshold: float = 0.0


def psd_eigenvalues(matrix, rel_tol=1e-10):
    """Eigenvalues of a symmetric PSD matrix, truncated for use as a mixture.

    The input is symmetrized as ``(M + M.T) / 2`` first. Eigenvalues below
    ``rel_tol * mu_max`` are dropped; values more negative than
    ``-rel_tol * mu_max`` indicate a broken covariance estimate and raise.

    Parameters
    ----------
    matrix : array_like
        Square symmetric matrix (typically a resampled covariance block).
    rel_tol : float
        Relative truncation threshold.

    Returns
    -------
    MixtureSpec
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError("psd_eigenvalues expects a square matrix")
    sym = (m + m.T) / 2.0
    w = eigvalsh(sym)[::-1]
    mu_max = w[0]
    if not np.isfinite(mu_max) or mu_max <= 0:
        raise NumericalError("covariance has no positive eigenvalues")
    thr = rel_tol * mu_max
    if w[-1] < -thr:
        raise NumericalError(
            f"materially negative eigenvalue {w[-1]:.3e} "
            f"(threshold {-thr:.3e}); covariance estimate is not PSD"
        )
    kept = w[w > thr]
    return MixtureSpec(
        eigenvalues=np.ascontiguousarray(kept),
        dropped=int(w.size - kept.size),
        threshold=float(thr),
    )


def imhof_tail(q, mixture):
    """P(sum_k mu_k Z_k^2 > q) for independent standard normal Z_k.

    Parameters
    ----------
    q : float
        Non-negative quantile.
    mixture : MixtureSpec or array_like
        Eigenvalues mu_k; all must be positive.

    Returns
    -------
    float
        Tail probability, clamped to [1e-12, 1].
    """
    mu = np.asarray(getattr(mixture, "eigenvalues", mixture), dtype=float).ravel()
    if mu.size == 0:
        raise InputError("mixture has no eigenvalues")
    if np.any(mu <= 0):
        raise InputError("mixture eigenvalues must be positive")
    q = float(q)
    if q < 0:
        raise InputError("quantile must be non-negative")
    if q == 0.0:
        return 1.0

    # The integral is invariant to a common rescaling of (q, mu); normalizing
    # by the largest eigenvalue keeps the quadrature well scaled.
    scale = mu.max()
    m = mu / scale
    qs = q / scale
    omega = 0.5 * qs

    if m.size >= 3:
        p = _imhof_composite(m, omega)
        if p is not None:
            return min(1.0, max(p, P_FLOOR))
    return min(1.0, max(_imhof_quadpack(m, omega), P_FLOOR))


def _imhof_composite(m, omega):
    """Panel-doubling Gauss rule on a truncated interval; None if unsuitable.

    The integrand envelope 1/(u rho(u)) is below u^{-(1 + K/2)} / prod
    sqrt(m_k), which bounds the discarded tail beyond the cut U. Panels track
    the oscillation wavelength and are doubled until two successive levels
    agree.
    """
    k = m.size
    log_u = (2.0 / k) * (
        math.log(2.0 / (math.pi * k)) - math.log(1e-8) - 0.5 * np.log(m).sum()
    )
    if log_u > math.log(5e3):
        return None
    cut = max(10.0, math.exp(log_u))
    tail_err = 2.0 * math.exp(-0.5 * k * math.log(cut) - 0.5 * np.log(m).sum()) / k
    width = 2.0 * math.pi / (omega + 0.5 * m.sum())
    panels = int(math.ceil(cut / width))
    if panels > 20000:
        return None
    panels = max(panels, 16)

    nodes, weights = _gauss_rule()
    previous = None
    for _ in range(7):
        edges = np.linspace(0.0, cut, panels + 1)
        half = 0.5 * (cut / panels)
        centers = 0.5 * (edges[:-1] + edges[1:])
        u = (centers[:, None] + half * nodes[None, :]).ravel()
        mu_u = u[:, None] * m[None, :]
        theta = 0.5 * np.arctan(mu_u).sum(axis=1) - omega * u
        log_rho = 0.25 * np.log1p(np.square(mu_u)).sum(axis=1)
        value = float(
            np.sin(theta) @ (np.exp(-log_rho) / u * np.tile(half * weights, panels))
        )
        if previous is not None and abs(value - previous) + tail_err < 3e-7:
            return 0.5 + value / math.pi
        previous = value
        panels *= 2
    return None


def _imhof_quadpack(m, omega):
    """QUADPACK evaluation, robust for slowly decaying envelopes.

    With one or two eigenvalues the envelope decays too slowly for plain
    quadrature against the oscillation, so the tail is split as
    sin(psi - omega u) = sin(psi) cos(omega u) - cos(psi) sin(omega u) and
    each factor goes to the Fourier-weighted rule, which extrapolates over
    whole cycles.
    """

    def psi(u):
        return 0.5 * np.arctan(m * u).sum()

    def inv_urho(u):
        return math.exp(-0.25 * np.log1p(np.square(m * u)).sum()) / u

    def head(u):
        # sin(theta)/(u rho); finite at 0 with limit (sum(m) - 2 omega)/2.
        return math.sin(psi(u) - omega * u) * inv_urho(u)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        a = min(4.0 * math.pi / omega, 40.0)
        val, est_err = quad(head, 0.0, a, epsabs=1e-9, epsrel=1e-9, limit=200)
        for part, weight in (
            (lambda u: math.sin(psi(u)) * inv_urho(u), "cos"),
            (lambda u: -math.cos(psi(u)) * inv_urho(u), "sin"),
        ):
            v, e = quad(part, a, np.inf, weight=weight, wvar=omega,
                        epsabs=1e-9, limlst=120, limit=200)
            val += v
            est_err += e
    if est_err / math.pi > _QUAD_ABS_TOL:
        raise NumericalError(
            f"Imhof quadrature did not converge (error estimate {est_err:.2e})"
        )
    return 0.5 + val / math.pi


def _gauss_rule(_cache=[]):
    if not _cache:
        nodes, weights = np.polynomial.legendre.leggauss(15)
        _cache.append((nodes, weights))
    return _cache[0]

"""Score residuals, genotype bases, and the variance-component statistics.

The per-observation residuals are the negated scores of the two linear
predictors at the fitted null, so at the maximum-likelihood estimate they are
orthogonal to every null-model column. The set-level statistic for component
``iota`` is

    S_iota = n^{-1} sum_i r_iota,i Psi(G_i),    Q_iota = n * ||S_iota||^2,

where ``Psi`` is either the raw genotype matrix or a kernel-PCA feature map.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import pdist, squareform

from .errors import InputError, NumericalError


def residual_pi(y, pi0, lambda0):
    """Mixture-probability score residual.

    ``1{y=0} * pi(1-pi)(1-e^{-lam}) / D - 1{y>0} * (1-pi)`` with
    ``D = (1-pi) + pi e^{-lam}``. Zero counts carry positive evidence for
    susceptibility in proportion to how unlikely a Poisson zero is.
    """
    y, pi0, lambda0, scalar = _check_residual_args(y, pi0, lambda0)
    denom = (1.0 - pi0) + pi0 * np.exp(-lambda0)
    r0 = pi0 * (1.0 - pi0) * (-np.expm1(-lambda0)) / denom
    out = np.where(y == 0, r0, -(1.0 - pi0))
    return float(out) if scalar else out


def residual_lambda(y, pi0, lambda0):
    """Poisson-rate score residual.

    ``1{y=0} * pi lam e^{-lam} / D - 1{y>0} * (y - lam)`` with
    ``D = (1-pi) + pi e^{-lam}``.
    """
    y, pi0, lambda0, scalar = _check_residual_args(y, pi0, lambda0)
    denom = (1.0 - pi0) + pi0 * np.exp(-lambda0)
    r0 = pi0 * lambda0 * np.exp(-lambda0) / denom
    out = np.where(y == 0, r0, -(y - lambda0))
    return float(out) if scalar else out


def score_residuals(y, pi0, lambda0):
    """Both residual vectors at once."""
    return residual_pi(y, pi0, lambda0), residual_lambda(y, pi0, lambda0)


def _check_residual_args(y, pi0, lambda0):
    y = np.asarray(y)
    pi0 = np.asarray(pi0, dtype=float)
    lambda0 = np.asarray(lambda0, dtype=float)
    if np.any((pi0 <= 0) | (pi0 >= 1)):
        raise InputError("pi0 must lie strictly inside (0, 1)")
    if np.any(lambda0 <= 0):
        raise InputError("lambda0 must be positive")
    scalar = y.ndim == 0 and pi0.ndim == 0 and lambda0.ndim == 0
    return y, pi0, lambda0, scalar


@dataclass(frozen=True)
class BasisSpec:
    """How to build Psi(G).

    kind "identity" uses the genotype columns as they are (K = p). kind
    "kernel_pca" eigendecomposes a kernel matrix (linear, polynomial of the
    given degree, or Gaussian with the given bandwidth; bandwidth None means
    the median pairwise distance) and returns the leading eigenvectors scaled
    by the square root of their eigenvalues. The rank is either fixed
    (``rank``) or chosen as the smallest K whose eigenvalues cover
    ``rank_frac`` of the positive spectrum.
    """

    kind: str = "identity"
    kernel: str = "linear"
    degree: int = 2
    bandwidth: float | None = None
    rank: int | None = None
    rank_frac: float = 0.999
    center_kernel: bool = False
    center_columns: bool = False

    def __post_init__(self):
        if self.kind not in ("identity", "kernel_pca"):
            raise InputError(f"unknown basis kind {self.kind!r}")
        if self.kernel not in ("linear", "poly", "gaussian"):
            raise InputError(f"unknown kernel {self.kernel!r}")
        if self.degree < 1:
            raise InputError("polynomial degree must be at least 1")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise InputError("bandwidth must be positive")
        if self.rank is not None and self.rank < 1:
            raise InputError("rank must be at least 1")
        if not 0 < self.rank_frac <= 1:
            raise InputError("rank_frac must lie in (0, 1]")

    def describe(self):
        """JSON-friendly description for reports."""
        d = {"kind": self.kind}
        if self.kind == "identity":
            d["centered"] = self.center_columns
        else:
            d["kernel"] = self.kernel
            if self.kernel == "poly":
                d["degree"] = self.degree
            if self.kernel == "gaussian":
                d["bandwidth"] = self.bandwidth
            d["rank"] = self.rank
            d["rank_frac"] = self.rank_frac
            d["centered"] = self.center_kernel
        return d


@dataclass
class Basis:
    """Feature matrix Psi(G) with the spec that produced it."""

    psi: np.ndarray
    spec: BasisSpec
    eigenvalues: np.ndarray | None = None

    @property
    def K(self):
        return self.psi.shape[1]


def build_basis(genotypes, spec=None):
    """Construct Psi(G) for a genotype matrix.

    Parameters
    ----------
    genotypes : array_like
        n x p dosage matrix.
    spec : BasisSpec, optional
        Defaults to the identity basis.

    Returns
    -------
    Basis
    """
    spec = spec or BasisSpec()
    G = np.asarray(genotypes, dtype=float)
    if G.ndim != 2 or G.shape[1] < 1:
        raise InputError("genotypes must be a 2-d matrix with at least one column")
    if spec.kind == "identity":
        psi = G - G.mean(axis=0) if spec.center_columns else G.copy()
        if np.any(np.all(psi == 0.0, axis=0)):
            raise InputError("basis has a zero column")
        return Basis(psi=psi, spec=spec)

    K = _kernel_matrix(G, spec)
    if spec.center_kernel:
        row = K.mean(axis=0)
        K = K - row[None, :] - row[:, None] + row.mean()
    K = (K + K.T) / 2.0
    w, V = eigh(K)
    w = w[::-1]
    V = V[:, ::-1]
    tol = 1e-9 * max(w[0], 0.0)
    if w[0] <= 0:
        raise NumericalError("kernel matrix has no positive eigenvalues")
    if w[-1] < -1e-8 * w[0]:
        raise NumericalError("kernel matrix is not positive semi-definite")
    nrank = int(np.sum(w > tol))
    if spec.rank is not None:
        if spec.rank > nrank:
            raise InputError(
                f"requested rank {spec.rank} exceeds the numerical rank {nrank}"
            )
        k = spec.rank
    else:
        frac = np.cumsum(w[:nrank]) / w[:nrank].sum()
        k = int(np.searchsorted(frac, spec.rank_frac) + 1)
        k = min(k, nrank)
    psi = V[:, :k] * np.sqrt(w[:k])
    return Basis(psi=psi, spec=spec, eigenvalues=w[:k].copy())


def _kernel_matrix(G, spec):
    if spec.kernel == "linear":
        return G @ G.T
    if spec.kernel == "poly":
        return (1.0 + G @ G.T) ** spec.degree
    sigma = spec.bandwidth
    if sigma is None:
        d = pdist(G)
        med = np.median(d[d > 0]) if np.any(d > 0) else 0.0
        sigma = med if med > 0 else 1.0
    sq = squareform(pdist(G, "sqeuclidean"))
    return np.exp(-sq / (2.0 * sigma**2))


@dataclass
class ScoreResult:
    """Set-level score vectors and quadratic statistics."""

    s_pi: np.ndarray
    s_lambda: np.ndarray
    q_pi: float
    q_lambda: float
    residuals_pi: np.ndarray
    residuals_lambda: np.ndarray


def score_statistics(null_fit, dataset, basis):
    """Compute S_iota and Q_iota for a fitted null model.

    Parameters
    ----------
    null_fit : NullFit
        Converged fit on the same dataset.
    dataset : Dataset
    basis : Basis
        Feature map over the same samples.

    Returns
    -------
    ScoreResult
    """
    n = dataset.n
    if basis.psi.shape[0] != n or null_fit.pi0.shape[0] != n:
        raise InputError("fit, dataset, and basis do not share the sample dimension")
    r_pi, r_lambda = score_residuals(dataset.y, null_fit.pi0, null_fit.lambda0)
    s_pi = basis.psi.T @ r_pi / n
    s_lambda = basis.psi.T @ r_lambda / n
    return ScoreResult(
        s_pi=s_pi,
        s_lambda=s_lambda,
        q_pi=n * float(s_pi @ s_pi),
        q_lambda=n * float(s_lambda @ s_lambda),
        residuals_pi=r_pi,
        residuals_lambda=r_lambda,
    )

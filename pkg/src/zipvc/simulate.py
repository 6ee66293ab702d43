"""Monte Carlo size and power studies.

Data generation follows a fixed recipe per replicate: five structured
covariates, Gaussian-copula genotypes with a configured MAF vector and latent
correlation matrix, and a ZIP outcome whose two linear predictors optionally
include three causal SNPs. Covariate-genotype dependence is injected as
``X = rho_xg * (G_causal @ A) + X_ind``. Every replicate draws from streams
keyed by (seed, replicate, purpose), so studies are reproducible and
thread-count invariant.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from importlib import resources

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .comparators import wald_poisson_hw, zip_wald_all
from .data import make_dataset
from .errors import InputError, NumericalError, ZipvcError
from .omnibus import run_test
from .rng import make_stream
from .scores import BasisSpec
from .zipfit import FitConfig

log = logging.getLogger(__name__)

# Shared coefficients across all shipped settings.
ALPHA_PI = 1.5
ALPHA_LAMBDA = 1.3
BETA_PI = (0.75, 0.5, 0.25, 1.0, 1.0)
BETA_LAMBDA = (0.25, 0.5, 0.75, 1.0, 1.0)

# Maps the three causal SNPs into the five covariates (rows: causal SNPs).
DEFAULT_A = (
    (0.08, 0.5, 0.0, 0.5, 0.8),
    (0.09, 0.4, 0.1, 0.0, 0.0),
    (0.0, 0.0, 0.3, 0.6, 0.9),
)

MODES = ("null", "both", "pi_only", "lambda_only")

DEFAULT_TESTS = (
    "vc_pi",
    "vc_lambda",
    "vc_minp",
    "vc_fisher",
    "vc_std",
    "zip_wald_pi",
    "zip_wald_lambda",
    "zip_wald_joint",
    "poisson_wald_hw",
)

_LOGLAM_CAP = 30.0


@dataclass(frozen=True)
class GenotypeProfile:
    """MAF vector, latent correlation matrix, and causal indices for a SNP set.

    The profile also carries the default per-component causal effect sizes so
    a study config can simply point at a named profile.
    """

    name: str
    maf: np.ndarray
    R: np.ndarray
    causal: tuple
    gamma_pi: np.ndarray
    gamma_lambda: np.ndarray

    @property
    def p(self):
        return self.maf.shape[0]


@dataclass(frozen=True)
class SimConfig:
    """One simulation scenario."""

    setting: str
    profile: GenotypeProfile
    n: int = 1000
    replicates: int = 500
    B: int = 1000
    seed: int = 0
    mode: str = "null"
    rho_xg: float = 0.0
    overdispersion_sd: float = 0.0
    with_covariates: bool = True
    alpha_pi: float = ALPHA_PI
    alpha_lambda: float = ALPHA_LAMBDA
    beta_pi: tuple = BETA_PI
    beta_lambda: tuple = BETA_LAMBDA
    gamma_pi: tuple | None = None  # None: use the profile's values
    gamma_lambda: tuple | None = None
    a_matrix: tuple = DEFAULT_A

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}")
        if self.n < 1 or self.replicates < 1:
            raise InputError("n and replicates must be positive")
        if self.rho_xg < 0:
            raise InputError("rho_xg must be non-negative")
        if self.rho_xg > 0 and not self.with_covariates:
            raise InputError("rho_xg > 0 requires covariates in the scenario")

    def effective_gamma(self):
        gpi = np.asarray(
            self.gamma_pi if self.gamma_pi is not None else self.profile.gamma_pi,
            dtype=float,
        )
        glam = np.asarray(
            self.gamma_lambda
            if self.gamma_lambda is not None
            else self.profile.gamma_lambda,
            dtype=float,
        )
        return gpi, glam


@dataclass(frozen=True)
class TestSummary:
    test: str
    replicates: int
    rejections: int
    rate: float
    se: float


@dataclass
class StudyResult:
    """Aggregated rejection rates of one scenario at alpha = 0.05."""

    setting: str
    alpha: float
    tests: dict
    failures: dict
    pvalues: dict = field(default_factory=dict)

    def to_tsv(self):
        lines = ["setting\ttest\treplicates\trejections\trate\tse"]
        for name, s in self.tests.items():
            lines.append(
                f"{self.setting}\t{name}\t{s.replicates}\t{s.rejections}"
                f"\t{s.rate!r}\t{s.se!r}"
            )
        return "\n".join(lines) + "\n"


def gen_covariates(n, stream):
    """Five correlated covariates (binomial and normal building blocks).

    The draw order is fixed: X1, (W2, Z2), Z3, (W4, Z4), (W5, Z5).
    """
    x1 = stream.binomial(2, 0.5, n).astype(float)
    w2 = stream.binomial(2, 0.5, n)
    z2 = stream.normal(0.0, 0.5, n)
    x2 = 0.5 * w2 + z2
    z3 = stream.normal(0.0, 0.5, n)
    x3 = 0.1 * x1 * x2 + z3
    w4 = stream.binomial(2, 0.4, n)
    z4 = stream.normal(0.0, 0.5, n)
    x4 = 0.1 * w4 - 0.2 * x2 + 0.2 * x3 + z4
    w5 = stream.binomial(2, 0.4, n)
    z5 = stream.normal(0.0, 0.5, n)
    x5 = 0.5 * w5 + 0.15 * x2 + 0.2 * x3 + z5
    return np.column_stack([x1, x2, x3, x4, x5])


def gen_genotypes(n, profile, stream, repair=False):
    """Gaussian-copula dosages for one SNP set.

    Two independent latent MVN(0, R) vectors per individual; haplotype allele
    j is 1 iff the latent value falls below the MAF_j quantile, and the
    dosage is the sum of the two haplotypes. Columns whose latent correlation
    is exactly 1 share the latent draw, so comonotone SNPs with equal MAF are
    identical.

    Parameters
    ----------
    n : int
    profile : GenotypeProfile
    stream : numpy.random.Generator
    repair : bool
        Clip slightly negative eigenvalues of R to zero instead of raising.
    """
    R = np.asarray(profile.R, dtype=float)
    p = R.shape[0]
    w, V = np.linalg.eigh((R + R.T) / 2.0)
    if w[0] < -1e-8 * max(w[-1], 1.0):
        if not repair:
            raise InputError(
                f"profile {profile.name!r}: latent correlation matrix is not "
                f"positive semi-definite (min eigenvalue {w[0]:.3e}); pass "
                f"repair=True to clip it"
            )
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    # Comonotone duplicates: reuse the representative's latent column.
    dup_of = np.full(p, -1)
    for j in range(1, p):
        for i in range(j):
            if R[i, j] >= 1.0 - 1e-12:
                dup_of[j] = i
                break
    thresh = norm.ppf(np.asarray(profile.maf, dtype=float))
    dosage = np.zeros((n, p))
    for _ in range(2):
        latent = stream.standard_normal((n, p)) @ root
        for j in range(p):
            if dup_of[j] >= 0:
                latent[:, j] = latent[:, dup_of[j]]
        dosage += latent < thresh
    return dosage


def gen_outcome(X, G, config, stream):
    """ZIP outcome for one replicate.

    ``G`` holds the causal columns only. The alternative mode gates the
    genotype terms by zeroing the coefficient vectors (never by skipping
    draws), so a given stream yields the same outcome whenever the effective
    coefficients agree. Draw order: overdispersion normals, susceptibility
    uniforms, Poisson counts.
    """
    n = X.shape[0]
    gpi, glam = config.effective_gamma()
    if config.mode in ("null", "lambda_only"):
        gpi = np.zeros_like(gpi)
    if config.mode in ("null", "pi_only"):
        glam = np.zeros_like(glam)
    if G.shape[1] != gpi.shape[0] or G.shape[1] != glam.shape[0]:
        raise InputError("causal genotype count does not match gamma length")

    eta_pi = np.full(n, config.alpha_pi)
    eta_lam = np.full(n, config.alpha_lambda)
    if X.shape[1]:
        beta_pi = np.asarray(config.beta_pi, dtype=float)
        beta_lambda = np.asarray(config.beta_lambda, dtype=float)
        if X.shape[1] != beta_pi.shape[0]:
            raise InputError("covariate count does not match beta length")
        eta_pi = eta_pi + X @ beta_pi
        eta_lam = eta_lam + X @ beta_lambda
    eta_pi = eta_pi + G @ gpi
    eta_lam = eta_lam + G @ glam

    eps = stream.standard_normal(n) * config.overdispersion_sd
    eta_lam = eta_lam + eps
    over = eta_lam > _LOGLAM_CAP
    if np.any(over):
        log.warning(
            "clamping %d log-rate values at %.0f", int(over.sum()), _LOGLAM_CAP
        )
        eta_lam = np.minimum(eta_lam, _LOGLAM_CAP)

    pi = expit(eta_pi)
    susceptible = stream.random(n) < pi
    counts = stream.poisson(np.exp(eta_lam))
    return np.where(susceptible, counts, 0).astype(np.int64)


def run_study(config, tests=None, threads=1, keep_pvalues=False, alpha=0.05):
    """Run all replicates of a scenario and aggregate rejection rates.

    Parameters
    ----------
    config : SimConfig
    tests : sequence of str, optional
        Subset of DEFAULT_TESTS; order is preserved in the output.
    threads : int
        Worker processes. Results are assembled by replicate index, so the
        thread count never changes any number.
    keep_pvalues : bool
        Also return the per-replicate p-value arrays.
    alpha : float
        Rejection threshold.

    Returns
    -------
    StudyResult
    """
    tests = tuple(tests) if tests else DEFAULT_TESTS
    unknown = [t for t in tests if t not in DEFAULT_TESTS]
    if unknown:
        raise InputError(f"unknown tests requested: {unknown}")

    worker = partial(_replicate_pvalues, config=config, tests=tests)
    reps = range(config.replicates)
    if threads > 1:
        chunk = max(1, config.replicates // (8 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(worker, reps, chunksize=chunk))
    else:
        rows = [worker(r) for r in reps]

    summaries = {}
    failures = {}
    pvalues = {}
    for name in tests:
        ps = np.array([row[name] for row in rows])
        valid = np.isfinite(ps)
        n_used = int(valid.sum())
        failures[name] = config.replicates - n_used
        if failures[name] > 0.05 * config.replicates:
            raise NumericalError(
                f"test {name} failed in {failures[name]} of "
                f"{config.replicates} replicates"
            )
        rej = int(np.sum(ps[valid] <= alpha))
        rate = rej / n_used if n_used else 0.0
        se = float(np.sqrt(rate * (1.0 - rate) / n_used)) if n_used else 0.0
        summaries[name] = TestSummary(
            test=name, replicates=n_used, rejections=rej, rate=rate, se=se
        )
        if keep_pvalues:
            pvalues[name] = ps
    total_failed = sum(1 for row in rows if all(np.isnan(row[t]) for t in tests))
    if total_failed:
        log.warning("%d replicates failed entirely", total_failed)
    return StudyResult(
        setting=config.setting,
        alpha=alpha,
        tests=summaries,
        failures=failures,
        pvalues=pvalues,
    )


def replicate_dataset(config, rep):
    """Generate the dataset for one replicate (exposed for diagnostics)."""
    cov_stream = make_stream(config.seed, rep, 0)
    geno_stream = make_stream(config.seed, rep, 1)
    outcome_stream = make_stream(config.seed, rep, 2)
    n = config.n
    if config.with_covariates:
        x_ind = gen_covariates(n, cov_stream)
    else:
        x_ind = np.empty((n, 0))
    G = gen_genotypes(n, config.profile, geno_stream)
    G_causal = G[:, list(config.profile.causal)]
    X = x_ind
    if config.rho_xg > 0:
        A = np.asarray(config.a_matrix, dtype=float)
        X = x_ind + config.rho_xg * (G_causal @ A)
    y = gen_outcome(X, G_causal, config, outcome_stream)
    return make_dataset(
        [f"s{i + 1}" for i in range(n)],
        y,
        G,
        X if X.shape[1] else None,
        genotype_names=[f"{config.profile.name}_{j + 1}" for j in range(G.shape[1])],
    )


def _replicate_pvalues(rep, config, tests):
    out = {t: np.nan for t in tests}
    try:
        ds = replicate_dataset(config, rep)
    except ZipvcError as exc:
        log.warning("replicate %d: data generation failed: %s", rep, exc)
        return out

    if any(t.startswith("vc_") for t in tests):
        try:
            report = run_test(
                ds,
                BasisSpec(),
                B=config.B,
                seed=(config.seed, rep, 3),
                config=FitConfig(),
            )
            vals = {
                "vc_pi": report.p_pi,
                "vc_lambda": report.p_lambda,
                "vc_minp": report.p_min,
                "vc_fisher": report.p_fisher,
                "vc_std": report.p_std,
            }
            for t in tests:
                if t in vals:
                    out[t] = vals[t]
        except ZipvcError as exc:
            log.warning("replicate %d: variance-component tests failed: %s", rep, exc)

    zip_tests = [t for t in tests if t.startswith("zip_wald_")]
    if zip_tests:
        try:
            walds = zip_wald_all(ds)
            for t in zip_tests:
                out[t] = walds[t.removeprefix("zip_wald_")].p_value
        except ZipvcError as exc:
            log.warning("replicate %d: ZIP Wald failed: %s", rep, exc)

    if "poisson_wald_hw" in tests:
        try:
            out["poisson_wald_hw"] = wald_poisson_hw(ds).p_value
        except ZipvcError as exc:
            log.warning("replicate %d: Poisson Wald failed: %s", rep, exc)
    return out


# ---------------------------------------------------------------------------
# configuration files

def load_profile(source):
    """Load a genotype profile from a bundled name, a path, or a dict."""
    if isinstance(source, GenotypeProfile):
        return source
    if isinstance(source, str):
        data = _read_preset_json(source, "profile")
        return _profile_from_dict(data, f"profile {source!r}")
    if isinstance(source, dict):
        return _profile_from_dict(source, "profile")
    raise InputError("profile must be a name, a path, or an inline object")


def load_sim_config(source, overrides=None):
    """Load a SimConfig from a JSON file path or a dict.

    ``overrides`` maps field names (replicates, seed, B, n, threads is NOT a
    config field) to replacement values, as the CLI options do.
    """
    if isinstance(source, dict):
        data = dict(source)
        where = "config"
    else:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"config file not found: {source}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {source} is not valid JSON: {exc}") from exc
        where = f"config {source}"
    if not isinstance(data, dict):
        raise InputError(f"{where}: top level must be an object")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    def need(key, typ, default=None, required=False):
        if key not in data:
            if required:
                raise InputError(f"{where}.{key}: missing required key")
            return default
        value = data[key]
        if typ is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, typ):
            raise InputError(
                f"{where}.{key}: expected {getattr(typ, '__name__', typ)}, "
                f"got {type(value).__name__}"
            )
        return value

    profile = data.get("profile")
    if profile is None:
        raise InputError(f"{where}.profile: missing required key")
    try:
        prof = load_profile(profile)
    except InputError as exc:
        raise InputError(f"{where}.profile: {exc}") from exc

    known = {
        "setting", "profile", "n", "replicates", "B", "seed", "mode", "rho_xg",
        "overdispersion_sd", "with_covariates", "alpha_pi", "alpha_lambda",
        "beta_pi", "beta_lambda", "gamma_pi", "gamma_lambda", "a_matrix",
    }
    for key in data:
        if key not in known:
            raise InputError(f"{where}.{key}: unknown key")

    def vector(key, length, default=None):
        value = data.get(key, default)
        if value is None:
            return None
        if not isinstance(value, (list, tuple)) or len(value) != length:
            raise InputError(f"{where}.{key}: expected a list of length {length}")
        for i, v in enumerate(value):
            if not isinstance(v, (int, float)):
                raise InputError(f"{where}.{key}[{i}]: expected a number")
        return tuple(float(v) for v in value)

    a_matrix = data.get("a_matrix", DEFAULT_A)
    a = np.asarray(a_matrix, dtype=float)
    if a.shape != (len(prof.causal), 5):
        raise InputError(
            f"{where}.a_matrix: expected shape ({len(prof.causal)}, 5), "
            f"got {a.shape}"
        )

    try:
        return SimConfig(
            setting=need("setting", str, default="study"),
            profile=prof,
            n=need("n", int, default=1000),
            replicates=need("replicates", int, default=500),
            B=need("B", int, default=1000),
            seed=need("seed", int, default=0),
            mode=need("mode", str, default="null"),
            rho_xg=need("rho_xg", float, default=0.0),
            overdispersion_sd=need("overdispersion_sd", float, default=0.0),
            with_covariates=need("with_covariates", bool, default=True),
            alpha_pi=need("alpha_pi", float, default=ALPHA_PI),
            alpha_lambda=need("alpha_lambda", float, default=ALPHA_LAMBDA),
            beta_pi=vector("beta_pi", 5, BETA_PI),
            beta_lambda=vector("beta_lambda", 5, BETA_LAMBDA),
            gamma_pi=vector("gamma_pi", len(prof.causal)),
            gamma_lambda=vector("gamma_lambda", len(prof.causal)),
            a_matrix=tuple(map(tuple, a.tolist())),
        )
    except InputError as exc:
        raise InputError(f"{where}: {exc}") from exc


def bundled_preset_path(name):
    """Filesystem path of a bundled preset JSON (profiles and settings)."""
    base = resources.files("zipvc") / "presets" / f"{name}.json"
    if not base.is_file():
        raise InputError(f"no bundled preset named {name!r}")
    return str(base)


def _read_preset_json(source, kind):
    import os

    if os.path.exists(source):
        path = source
    else:
        try:
            path = bundled_preset_path(source)
        except InputError:
            raise InputError(
                f"{kind} {source!r} is neither a file nor a bundled preset"
            ) from None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _profile_from_dict(data, where):
    for key in ("name", "maf", "R", "causal"):
        if key not in data:
            raise InputError(f"{where}.{key}: missing required key")
    maf = np.asarray(data["maf"], dtype=float)
    if maf.ndim != 1 or maf.size < 1:
        raise InputError(f"{where}.maf: expected a non-empty list")
    if np.any((maf <= 0) | (maf > 0.5)):
        j = int(np.argmax((maf <= 0) | (maf > 0.5)))
        raise InputError(f"{where}.maf[{j}]: must lie in (0, 0.5]")
    R = np.asarray(data["R"], dtype=float)
    p = maf.size
    if R.shape != (p, p):
        raise InputError(f"{where}.R: expected shape ({p}, {p}), got {R.shape}")
    if not np.allclose(R, R.T, atol=1e-10):
        raise InputError(f"{where}.R: must be symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-10):
        raise InputError(f"{where}.R: must have unit diagonal")
    causal = data["causal"]
    if not isinstance(causal, (list, tuple)) or not causal:
        raise InputError(f"{where}.causal: expected a non-empty list of indices")
    for i, c in enumerate(causal):
        if not isinstance(c, int) or not 0 <= c < p:
            raise InputError(f"{where}.causal[{i}]: index out of range for p={p}")
    k = len(causal)
    gpi = np.asarray(data.get("gamma_pi", np.zeros(k)), dtype=float)
    glam = np.asarray(data.get("gamma_lambda", np.zeros(k)), dtype=float)
    if gpi.shape != (k,) or glam.shape != (k,):
        raise InputError(f"{where}.gamma_pi/gamma_lambda: expected length {k}")
    return GenotypeProfile(
        name=str(data["name"]),
        maf=maf,
        R=R,
        causal=tuple(int(c) for c in causal),
        gamma_pi=gpi,
        gamma_lambda=glam,
    )

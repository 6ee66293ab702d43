"""Data containers, CSV ingestion, and LD pruning.

File formats are plain UTF-8 CSV with an ``id`` column first: phenotypes have
header ``id,y``, covariates ``id,<name1>,...``, genotypes ``id,<snp1>,...``
with real-valued dosages in [0, 2]. Samples are aligned by intersecting the
ids across files, keeping the phenotype file's order.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import InputError


@dataclass(frozen=True)
class Dataset:
    """Row-aligned outcome, genotypes, and covariates.

    The covariate matrix never contains an intercept column; the fitter
    prepends one. ``covariates`` may have zero columns.
    """

    ids: tuple
    y: np.ndarray
    genotypes: np.ndarray
    covariates: np.ndarray
    genotype_names: tuple
    covariate_names: tuple

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.genotypes.shape[1]

    @property
    def q(self):
        return self.covariates.shape[1]


@dataclass(frozen=True)
class PruneReport:
    """Outcome of a greedy LD prune.

    ``dropped`` holds (dropped index, index of the already-kept column it
    correlated with, correlation) triples. Kept columns preserve input order.
    """

    kept: tuple
    dropped: tuple
    threshold: float

    def apply(self, genotypes):
        return np.asarray(genotypes)[:, list(self.kept)]


def make_dataset(ids, y, genotypes, covariates=None, genotype_names=None,
                 covariate_names=None):
    """Validate raw arrays and assemble a Dataset.

    Enforces: aligned lengths, integer counts >= 0, dosages in [0, 2] (within
    1e-9, then clipped), and no constant genotype or covariate column.
    """
    ids = tuple(str(i) for i in ids)
    n = len(ids)
    if n < 1:
        raise InputError("dataset has no samples")
    y = np.asarray(y)
    if y.shape != (n,):
        raise InputError("phenotype length does not match the sample count")
    if np.any(pd.isna(y)):
        raise InputError("missing value in y")
    if np.any(np.asarray(y, dtype=float) < 0):
        raise InputError("negative count in y")
    if np.any(np.mod(np.asarray(y, dtype=float), 1) != 0):
        raise InputError("non-integer count in y")
    y = np.asarray(y, dtype=float).astype(np.int64)

    G = np.asarray(genotypes, dtype=float)
    if G.ndim != 2 or G.shape[0] != n or G.shape[1] < 1:
        raise InputError("genotypes must be an n x p matrix with p >= 1")
    if np.any(~np.isfinite(G)):
        raise InputError("missing or non-finite genotype value")
    if np.any(G < -1e-9) or np.any(G > 2 + 1e-9):
        bad = np.argwhere((G < -1e-9) | (G > 2 + 1e-9))[0]
        raise InputError(
            f"dosage outside [0, 2] at sample row {bad[0]}, column {bad[1]}"
        )
    G = np.clip(G, 0.0, 2.0)

    if covariates is None:
        X = np.empty((n, 0))
    else:
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != n:
            raise InputError("covariate rows do not match the sample count")
    if np.any(~np.isfinite(X)):
        raise InputError("missing or non-finite covariate value")

    gnames = tuple(genotype_names) if genotype_names else tuple(
        f"snp{j + 1}" for j in range(G.shape[1])
    )
    xnames = tuple(covariate_names) if covariate_names else tuple(
        f"x{j + 1}" for j in range(X.shape[1])
    )
    if len(gnames) != G.shape[1] or len(xnames) != X.shape[1]:
        raise InputError("column name counts do not match the matrices")

    for name, col in zip(gnames, G.T):
        if np.all(col == col[0]):
            raise InputError(f"genotype column {name!r} is constant")
    for name, col in zip(xnames, X.T):
        if np.all(col == col[0]):
            raise InputError(f"covariate column {name!r} is constant")

    return Dataset(
        ids=ids,
        y=y,
        genotypes=G,
        covariates=X,
        genotype_names=gnames,
        covariate_names=xnames,
    )


def load_dataset(pheno_path, geno_path, covar_path=None, policy="drop"):
    """Load and align the three CSV files into a Dataset.

    Parameters
    ----------
    pheno_path, geno_path : str
        Phenotype (header ``id,y``) and genotype CSVs.
    covar_path : str, optional
        Covariate CSV; omitting it gives an intercept-only null model.
    policy : str
        Missing-data policy: "drop" removes any sample with a missing value,
        "impute_geno" mean-imputes missing genotype cells (missing y or
        covariates are still dropped).

    Returns
    -------
    Dataset
    """
    if policy not in ("drop", "impute_geno"):
        raise InputError(f"unknown missing-data policy {policy!r}")
    pheno = _read_table(pheno_path, "phenotype")
    if list(pheno.columns) != ["y"]:
        raise InputError(
            f"phenotype file must have header id,y "
            f"(got id,{','.join(pheno.columns)})"
        )
    geno = _read_table(geno_path, "genotype")
    covar = _read_table(covar_path, "covariate") if covar_path else None

    common = pheno.index.intersection(geno.index)
    if covar is not None:
        common = common.intersection(covar.index)
    ids = [i for i in pheno.index if i in set(common)]
    if not ids:
        raise InputError("no samples are shared across the input files")

    yv = pheno.loc[ids, "y"]
    Gf = geno.loc[ids]
    Xf = covar.loc[ids] if covar is not None else None

    if policy == "impute_geno":
        Gf = Gf.fillna(Gf.mean())
    keep = ~yv.isna()
    keep &= ~Gf.isna().any(axis=1)
    if Xf is not None:
        keep &= ~Xf.isna().any(axis=1)
    ids = [i for i, k in zip(ids, keep) if k]
    if not ids:
        raise InputError("every sample has a missing value under policy 'drop'")

    return make_dataset(
        ids,
        yv.loc[ids].to_numpy(),
        Gf.loc[ids].to_numpy(),
        Xf.loc[ids].to_numpy() if Xf is not None else None,
        genotype_names=list(Gf.columns),
        covariate_names=list(Xf.columns) if Xf is not None else None,
    )


def save_dataset(dataset, pheno_path, geno_path, covar_path=None):
    """Write a Dataset back to the three CSV files (round-trip inverse of
    :func:`load_dataset`)."""
    # 17 significant digits: the pandas default truncates to 16 and loses
    # the last bit
    fmt = "%.17g"
    ids = pd.Index(dataset.ids, name="id")
    pd.DataFrame({"y": dataset.y}, index=ids).to_csv(pheno_path)
    pd.DataFrame(
        dataset.genotypes, index=ids, columns=list(dataset.genotype_names)
    ).to_csv(geno_path, float_format=fmt)
    if covar_path is not None:
        if dataset.q == 0:
            raise InputError("dataset has no covariates to write")
        pd.DataFrame(
            dataset.covariates, index=ids, columns=list(dataset.covariate_names)
        ).to_csv(covar_path, float_format=fmt)


def ld_prune(genotypes, threshold, names=None):
    """Greedy left-to-right LD prune.

    A column is dropped iff its absolute Pearson correlation with any earlier
    kept column exceeds ``threshold`` (strictly). Deterministic given column
    order; the first column of every correlated group survives.

    Parameters
    ----------
    genotypes : array_like
        n x p matrix.
    threshold : float
        In (0, 1].
    names : sequence of str, optional
        Column names for error messages and reports.

    Returns
    -------
    PruneReport
    """
    G = np.asarray(genotypes, dtype=float)
    if G.ndim != 2 or G.shape[1] < 1:
        raise InputError("genotypes must be a 2-d matrix with at least one column")
    if not 0 < threshold <= 1:
        raise InputError("threshold must lie in (0, 1]")
    n, p = G.shape
    sd = G.std(axis=0)
    if np.any(sd == 0):
        j = int(np.argmax(sd == 0))
        label = names[j] if names else f"column {j}"
        raise InputError(f"zero-variance genotype column: {label}")
    Z = (G - G.mean(axis=0)) / (sd * np.sqrt(n))

    kept = []
    dropped = []
    for j in range(p):
        if kept:
            # clip before comparing: rounding can push a perfect correlation
            # a few ulp past 1, which must not trip a threshold of 1.0
            corr = np.clip(Z[:, kept].T @ Z[:, j], -1.0, 1.0)
            hits = np.abs(corr) > threshold
            if np.any(hits):
                first = int(np.argmax(hits))
                dropped.append((j, kept[first], float(corr[first])))
                continue
        kept.append(j)
    return PruneReport(kept=tuple(kept), dropped=tuple(dropped),
                       threshold=float(threshold))


def _read_table(path, kind):
    """Read one CSV into a string-id-indexed numeric frame."""
    try:
        # the default float parser can be one ulp off; exact parsing keeps
        # save/load a true round trip
        frame = pd.read_csv(path, dtype={0: str}, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise InputError(f"{kind} file not found: {path}") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"{kind} file {path} is not parseable CSV: {exc}") from exc
    if frame.shape[1] < 2 or frame.columns[0] != "id":
        raise InputError(f"{kind} file {path} must start with an 'id' column")
    if frame["id"].duplicated().any():
        dup = frame["id"][frame["id"].duplicated()].iloc[0]
        raise InputError(f"duplicate id {dup!r} in {kind} file {path}")
    frame = frame.set_index("id")
    for col in frame.columns:
        converted = pd.to_numeric(frame[col], errors="coerce")
        bad = converted.isna() & frame[col].notna()
        if bad.any():
            cell = frame[col][bad].iloc[0]
            raise InputError(
                f"non-numeric value {cell!r} in column {col!r} of {kind} "
                f"file {path}"
            )
        frame[col] = converted
    return frame

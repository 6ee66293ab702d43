"""Command-line interface.

Three subcommands: ``test`` runs the variance-component association test on
one dataset and writes a report JSON, ``simulate`` runs a Monte Carlo study
from a config file, and ``prune`` drops near-duplicate genotype columns.

Every output file embeds or is accompanied by a run manifest (command,
resolved options, input digests, tool version, seed). Manifests contain only
fields that determine the output, so re-running one reproduces the output
byte for byte; wall time goes to stderr instead.

Exit codes: 0 success, 2 numerical or convergence failure, 3 bad input or
usage, 4 internal error.
"""

import hashlib
import json
import os
import sys
import time
import traceback

import click

from . import __version__
from .data import _read_table, ld_prune, load_dataset
from .errors import InputError, NumericalError, ZipvcError
from .omnibus import run_test
from .scores import BasisSpec
from .simulate import bundled_preset_path, load_sim_config, run_study


@click.group(name="zipvc")
@click.version_option(__version__, prog_name="zipvc")
def cli():
    """Association tests between SNP sets and zero-inflated count outcomes."""


@cli.command("test")
@click.option("--pheno", required=True, type=click.Path(), help="Phenotype CSV (id,y).")
@click.option("--geno", required=True, type=click.Path(), help="Genotype dosage CSV.")
@click.option("--covar", type=click.Path(), default=None, help="Covariate CSV.")
@click.option("--kernel", default="linear", show_default=True,
              help="Basis: linear | kpca:linear | kpca:poly[:D] | kpca:gaussian[:SIGMA].")
@click.option("--rank", type=int, default=None,
              help="Fixed number of kernel components (kpca only).")
@click.option("--rank-frac", type=float, default=0.999, show_default=True,
              help="Keep components up to this eigenvalue mass fraction (kpca only).")
@click.option("--center-basis", is_flag=True,
              help="Center the basis (columns for linear, kernel for kpca).")
@click.option("--resamples", "-B", "resamples", type=int, default=1000,
              show_default=True, help="Perturbation draws.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--missing", type=click.Choice(["drop", "impute_geno"]),
              default="drop", show_default=True,
              help="Row policy for missing values.")
@click.option("--out", required=True, type=click.Path(), help="Report JSON path.")
def cmd_test(pheno, geno, covar, kernel, rank, rank_frac, center_basis,
             resamples, seed, missing, out):
    """Test one SNP set against a count outcome; print the five p-values."""
    t0 = time.monotonic()
    dataset = load_dataset(pheno, geno, covar, policy=missing)
    spec = _parse_kernel(kernel, rank, rank_frac, center_basis)
    report = run_test(dataset, spec, B=resamples, seed=seed)
    report.manifest = {
        "command": "test",
        "options": {
            "pheno": pheno,
            "geno": geno,
            "covar": covar,
            "kernel": kernel,
            "rank": rank,
            "rank_frac": rank_frac,
            "center_basis": center_basis,
            "resamples": resamples,
            "seed": seed,
            "missing": missing,
            "out": out,
        },
        "inputs": _digests(pheno=pheno, geno=geno, covar=covar),
        "version": __version__,
        "seed": seed,
    }
    _write_json(report.to_dict(), out)
    click.echo("\t".join(
        repr(p) for p in (report.p_pi, report.p_lambda, report.p_min,
                          report.p_fisher, report.p_std)
    ))
    click.echo(f"report written to {out} in {time.monotonic() - t0:.2f}s", err=True)


@cli.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Scenario JSON (or bundled preset name).")
@click.option("--replicates", type=int, default=None,
              help="Override the config's replicate count.")
@click.option("--seed", type=int, default=None, help="Override the config's seed.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker processes (ZIPVC_THREADS overrides).")
@click.option("--out", required=True, type=click.Path(), help="Results TSV path.")
def cmd_simulate(config_path, replicates, seed, threads, out):
    """Run a size/power study and write rejection rates as TSV."""
    t0 = time.monotonic()
    env = os.environ.get("ZIPVC_THREADS")
    if env is not None:
        try:
            threads = int(env)
        except ValueError:
            raise InputError(f"ZIPVC_THREADS is not an integer: {env!r}") from None
    if threads < 1:
        raise InputError("thread count must be positive")
    config = load_sim_config(
        _resolve_config_path(config_path),
        overrides={"replicates": replicates, "seed": seed},
    )
    result = run_study(config, threads=threads)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(result.to_tsv())
    manifest = {
        "command": "simulate",
        "options": {
            "config": config_path,
            "replicates": config.replicates,
            "seed": config.seed,
            "out": out,
        },
        "inputs": _digests(config=_resolve_config_path(config_path)),
        "version": __version__,
        "seed": config.seed,
    }
    _write_json(manifest, out + ".manifest.json")
    click.echo(f"study written to {out} in {time.monotonic() - t0:.2f}s", err=True)


@cli.command("prune")
@click.option("--geno", required=True, type=click.Path(), help="Genotype dosage CSV.")
@click.option("--threshold", type=float, default=0.99, show_default=True,
              help="Drop a column when |corr| with a kept column exceeds this.")
@click.option("--out", required=True, type=click.Path(), help="Pruned CSV path.")
@click.option("--report", "report_path", required=True, type=click.Path(),
              help="Prune report JSON path.")
def cmd_prune(geno, threshold, out, report_path):
    """Drop genotype columns nearly collinear with an earlier column."""
    frame = _read_table(geno, "genotype")
    if frame.isna().any().any():
        col = frame.columns[frame.isna().any()][0]
        raise InputError(f"missing value in column {col!r} of genotype file {geno}")
    names = list(frame.columns)
    prune = ld_prune(frame.to_numpy(dtype=float), threshold, names=names)
    kept_names = [names[j] for j in prune.kept]
    frame[kept_names].to_csv(out)
    _write_json({
        "threshold": threshold,
        "kept": kept_names,
        "dropped": [
            {
                "name": names[j],
                "index": j,
                "kept_name": names[k],
                "kept_index": k,
                "correlation": c,
            }
            for j, k, c in prune.dropped
        ],
        "manifest": {
            "command": "prune",
            "options": {"geno": geno, "threshold": threshold, "out": out,
                        "report": report_path},
            "inputs": _digests(geno=geno),
            "version": __version__,
            "seed": None,
        },
    }, report_path)
    click.echo(f"kept {len(prune.kept)} of {len(names)} columns", err=True)


def _parse_kernel(text, rank, rank_frac, center):
    parts = text.split(":")
    if parts == ["linear"]:
        return BasisSpec(kind="identity", center_columns=center)
    if parts[0] != "kpca" or len(parts) not in (2, 3):
        raise InputError(
            f"unrecognized --kernel value {text!r}; expected linear, "
            f"kpca:linear, kpca:poly[:D], or kpca:gaussian[:SIGMA]"
        )
    kernel = parts[1]
    degree = 2
    bandwidth = None
    if kernel == "linear":
        if len(parts) == 3:
            raise InputError("kpca:linear takes no parameter")
    elif kernel == "poly":
        if len(parts) == 3:
            try:
                degree = int(parts[2])
            except ValueError:
                raise InputError(f"polynomial degree must be an integer, "
                                 f"got {parts[2]!r}") from None
    elif kernel == "gaussian":
        if len(parts) == 3:
            try:
                bandwidth = float(parts[2])
            except ValueError:
                raise InputError(f"gaussian bandwidth must be a number, "
                                 f"got {parts[2]!r}") from None
    else:
        raise InputError(f"unknown kpca kernel {kernel!r}")
    return BasisSpec(kind="kernel_pca", kernel=kernel, degree=degree,
                     bandwidth=bandwidth, rank=rank, rank_frac=rank_frac,
                     center_kernel=center)


def _resolve_config_path(source):
    if os.path.exists(source):
        return source
    try:
        return bundled_preset_path(source)
    except InputError:
        raise InputError(
            f"config {source!r} is neither a file nor a bundled preset name"
        ) from None


def _digests(**paths):
    out = {}
    for name, path in paths.items():
        if path is None:
            out[name] = None
            continue
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
        out[name] = h.hexdigest()
    return out


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def main(argv=None):
    """Entry point; returns the process exit code."""
    try:
        cli.main(args=argv, prog_name="zipvc", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 3
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 4
    except InputError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except NumericalError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ZipvcError as exc:
        click.echo(f"error: {exc}", err=True)
        return 4
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

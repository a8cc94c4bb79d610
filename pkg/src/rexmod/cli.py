"""Command-line front end.

Commands: validate, loglik, score, info, posterior-score, posterior-info,
elicit, check.  All outputs are JSON (17 significant digits) on stdout or
--out; warnings and errors go to stderr.  Exit codes: 0 success, 1
validation or computation error, 2 usage error.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import derivatives, fileio, inference
from .check import run_check_suite
from .errors import RexmodError
from .model import Network
from .priors import elicit_dirichlet_prior, elicit_normal_prior, prior_log_density
from .validate import collect_model_diagnostics


@dataclass(frozen=True)
class RunConfig:
    """Parsed invocation: paths, tolerances, determinism and output sink."""

    command: str
    model_path: str
    params_path: str | None = None
    data_path: str | None = None
    prior_path: str | None = None
    out_path: str | None = None
    threads: int = 1
    deterministic: bool = False
    fd_step: float = 1e-5
    grad_tol: float = 1e-6
    hess_tol: float = 1e-4
    enum_cap: int = 10 ** 6

    def __post_init__(self):
        for name in ("fd_step", "grad_tol", "hess_tol"):
            if getattr(self, name) <= 0.0:
                raise click.BadParameter(f"{name} must be positive")
        if self.threads < 1:
            raise click.BadParameter("threads must be at least 1")

    @property
    def effective_threads(self) -> int:
        # Reductions are ordered either way; forcing one thread under
        # --deterministic removes any scheduling doubt.
        return 1 if self.deterministic else self.threads


def _fail(exc: Exception):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _write(cfg: RunConfig, doc: dict):
    text = fileio.dump_json(doc)
    if cfg.out_path:
        Path(cfg.out_path).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _score_doc(network: Network, sv: derivatives.ScoreVector) -> dict:
    return {network.block_key_str(k): list(sv.blocks[k]) for k in network.block_keys()}


def _info_doc(network: Network, im: derivatives.InfoMatrix) -> dict:
    keys = network.block_keys()
    blocks = {}
    for a, k1 in enumerate(keys):
        for k2 in keys[a:]:
            name = f"{network.block_key_str(k1)};{network.block_key_str(k2)}"
            blocks[name] = [list(row) for row in im.blocks[(k1, k2)]]
    return {"blocks": blocks}


def _load_inputs(cfg: RunConfig):
    network = fileio.load_model(cfg.model_path)
    params = fileio.load_params(network, cfg.params_path)
    sample = fileio.load_data(network, cfg.data_path)
    return network, params, sample


def _model_opt(f):
    return click.option("-m", "--model", "model_path", required=True,
                        type=click.Path(exists=True, dir_okay=False),
                        help="Model file (JSON).")(f)


def _params_opt(f):
    return click.option("-p", "--params", "params_path", required=True,
                        type=click.Path(exists=True, dir_okay=False),
                        help="Parameter file (JSON).")(f)


def _data_opt(f):
    return click.option("-d", "--data", "data_path", required=True,
                        type=click.Path(exists=True, dir_okay=False),
                        help="Data file (CSV or JSON lines).")(f)


def _common_opts(f):
    f = click.option("--out", "out_path", type=click.Path(dir_okay=False),
                     help="Write output here instead of stdout.")(f)
    f = click.option("--threads", type=int, default=1, show_default=True,
                     help="Row-parallel workers for sample computations.")(f)
    f = click.option("--deterministic", is_flag=True,
                     help="Guarantee byte-identical output (single-threaded, "
                          "ordered reductions).")(f)
    return f


@click.group()
def main():
    """Likelihood derivatives and elicited priors for recursive exponential
    models over discrete DAGs."""


@main.command()
@_model_opt
def validate(model_path):
    """Check a model file: DAG validity, tying shapes, local model sizes."""
    network, problems = collect_model_diagnostics(model_path)
    if problems:
        for line in problems:
            click.echo(f"error: {line}", err=True)
        sys.exit(1)
    click.echo("OK")
    click.echo(f"variables: {len(network.variables)}")
    click.echo(f"tying classes: {len(network.tying)}")
    click.echo(f"parameter blocks: {len(network.block_keys())}")
    click.echo(f"total parameter dimension: {network.total_dim}")


def _compute_command(name):
    """Register one sample-computation command."""

    needs_prior = name.startswith("posterior")

    @_model_opt
    @_params_opt
    @_data_opt
    @_common_opts
    def run(model_path, params_path, data_path, out_path, threads, deterministic,
            prior_path=None):
        cfg = RunConfig(command=name, model_path=model_path, params_path=params_path,
                        data_path=data_path, prior_path=prior_path, out_path=out_path,
                        threads=threads, deterministic=deterministic)
        try:
            network, params, sample = _load_inputs(cfg)
            nthreads = cfg.effective_threads
            loglik = inference.sample_log_likelihood(network, params, sample,
                                                     threads=nthreads)
            doc = {"loglik": loglik}
            if needs_prior:
                prior = fileio.load_prior(network, cfg.prior_path)
                doc["logpost"] = loglik + prior_log_density(network, params, prior)
            if name in ("score", "info"):
                sv = derivatives.sample_score(network, params, sample, threads=nthreads)
                doc["score"] = _score_doc(network, sv)
            elif name in ("posterior-score", "posterior-info"):
                sv = derivatives.posterior_score(network, params, sample, prior,
                                                 threads=nthreads)
                doc["score"] = _score_doc(network, sv)
            if name == "info":
                im = derivatives.sample_information(network, params, sample,
                                                    threads=nthreads)
                doc["information"] = _info_doc(network, im)
            elif name == "posterior-info":
                im = derivatives.posterior_information(network, params, sample, prior,
                                                       threads=nthreads)
                doc["information"] = _info_doc(network, im)
            _write(cfg, doc)
        except RexmodError as exc:
            _fail(exc)

    if needs_prior:
        run = click.option("--prior", "prior_path", required=True,
                           type=click.Path(exists=True, dir_okay=False),
                           help="Prior file (JSON).")(run)
    run.__name__ = name.replace("-", "_")
    help_text = {
        "loglik": "Sample log-likelihood.",
        "score": "Sample log-likelihood gradient, in blocks.",
        "info": "Observed sample information, in blocks.",
        "posterior-score": "Posterior score: data score plus prior score.",
        "posterior-info": "Posterior information: data plus prior information.",
    }[name]
    main.command(name=name, help=help_text)(run)


for _name in ("loglik", "score", "info", "posterior-score", "posterior-info"):
    _compute_command(_name)


@main.command()
@click.argument("prior_type", type=click.Choice(["normal", "dirichlet"]))
@_model_opt
@click.option("-e", "--elicitation", "elicitation_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Elicitation file (JSON).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write the prior file here instead of stdout.")
def elicit(prior_type, model_path, elicitation_path, out_path):
    """Build a prior file from best guesses and intervals of variation."""
    try:
        network = fileio.load_model(model_path)
        elicitation = fileio.load_elicitation(network, elicitation_path)
        if prior_type == "normal":
            prior, diags = elicit_normal_prior(network, elicitation)
        else:
            prior, diags = elicit_dirichlet_prior(network, elicitation)
        for d in diags:
            for msg in d.warnings:
                click.echo(f"warning: block {network.block_key_str(d.key)!r}: {msg}",
                           err=True)
        text = fileio.dump_prior(network, prior, diags)
        if out_path:
            Path(out_path).write_text(text, encoding="utf-8")
        else:
            click.echo(text, nl=False)
    except RexmodError as exc:
        _fail(exc)


@main.command()
@_model_opt
@_params_opt
@_data_opt
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write the report here instead of stdout.")
@click.option("--fd-step", type=float, default=1e-5, show_default=True,
              help="Gradient finite-difference step (Hessian uses 10x this).")
@click.option("--grad-tol", type=float, default=1e-6, show_default=True,
              help="Relative tolerance for the gradient check.")
@click.option("--hess-tol", type=float, default=1e-4, show_default=True,
              help="Absolute tolerance for the Hessian check.")
@click.option("--enum-cap", type=int, default=10 ** 6, show_default=True,
              help="Refuse enumeration beyond this many complete configurations.")
def check(model_path, params_path, data_path, out_path, fd_step, grad_tol, hess_tol,
          enum_cap):
    """Cross-check derivatives and marginals against independent oracles."""
    cfg = RunConfig(command="check", model_path=model_path, params_path=params_path,
                    data_path=data_path, out_path=out_path, fd_step=fd_step,
                    grad_tol=grad_tol, hess_tol=hess_tol, enum_cap=enum_cap)
    try:
        network, params, sample = _load_inputs(cfg)
        report = run_check_suite(network, params, sample, grad_tol=cfg.grad_tol,
                                 hess_tol=cfg.hess_tol, fd_step=cfg.fd_step,
                                 enum_cap=cfg.enum_cap)
        _write(cfg, report.to_dict())
        if not report.passed:
            sys.exit(1)
    except RexmodError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()

"""Priors on parameter blocks, built from expert elicitations.

Two families are supported, both factorizing over blocks (one independent
prior per tying class and parent configuration):

* Normal: the conjugate prior of a local exponential model, Taylor-expanded
  around its mode theta*, is proportional to N(theta*, (1/beta)
  nu(theta*)^-1).  theta* minimizes the Kullback-Leibler discrepancy from
  the elicited best guess to the model (Newton-Raphson with step halving);
  beta comes from the elicited intervals via the delta method, taking the
  minimum over levels so the least precise statement wins.
* Dirichlet: for unrestricted tables, elicited intervals convert to
  per-level equivalent sample sizes (1 - p)p / SD^2 - 1; the smallest one,
  clamped at zero, scales the best guess into imaginary counts.

Prior score and information blocks follow in closed form and compose with
the data score and information by addition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidBestGuess,
    MissingPriorBlock,
    NonConvergence,
    NonPositiveInterval,
    SingularCovariance,
    SingularHessian,
    SupportViolation,
)
from .model import (
    BlockKey,
    LocalModel,
    Network,
    local_distribution,
    log_partition,
    saturated_theta_for,
    stat_cov,
    stat_mean,
)

__all__ = [
    "DirichletPrior",
    "DirichletPriorBlock",
    "Elicitation",
    "ElicitationBlock",
    "FitResult",
    "KL_WARNING_THRESHOLD",
    "NormalPrior",
    "NormalPriorBlock",
    "beta_from_intervals",
    "dirichlet_from_elicitation",
    "dirichlet_log_density",
    "dirichlet_prior_information",
    "dirichlet_prior_score",
    "elicit_dirichlet_prior",
    "elicit_normal_prior",
    "fit_theta_star",
    "kl_discrepancy",
    "normal_log_density",
    "normal_prior_information",
    "normal_prior_score",
    "prior_log_density",
    "prob_gradient",
]

# A fitted best guess further than this from the sub-model (in nats) earns a
# diagnostic: the expert statement and the structural restriction disagree.
KL_WARNING_THRESHOLD = 0.05

_MAX_HALVINGS = 30


# ---------------------------------------------------------------------------
# KL projection onto a local model
# ---------------------------------------------------------------------------


def kl_discrepancy(phat, model: LocalModel, theta):
    """KL(phat || p(.|theta)) with its gradient and Hessian in theta.

    Returns (value, gradient, hessian).  gradient = tau(theta) - sum_i
    phat_i t(i); hessian = nu(theta) at the evaluation point.  Uses the
    convention 0 log(0/a) = 0.
    """
    phat = _as_simplex(phat, model.n_levels)
    p = local_distribution(model, theta)
    support = phat > 0.0
    if np.any(support & (p <= 0.0)):
        raise SupportViolation("best guess puts mass where the model is zero")
    value = float(np.sum(phat[support] * np.log(phat[support] / p[support])))
    grad = stat_mean(model, theta) - phat @ model.stats
    hess = stat_cov(model, theta)
    return value, grad, hess


def _as_simplex(phat, n_levels: int) -> np.ndarray:
    arr = np.asarray(phat, dtype=float).reshape(-1)
    if arr.shape != (n_levels,):
        raise DimensionMismatch(f"expected {n_levels} probabilities, got {arr.shape[0]}")
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise InvalidBestGuess("best guess entries must be finite and non-negative")
    if abs(arr.sum() - 1.0) > 1e-6:
        raise InvalidBestGuess(f"best guess sums to {arr.sum()!r}, not 1")
    return arr


@dataclass(frozen=True)
class FitStep:
    theta: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    kl: float


@dataclass(frozen=True)
class FitResult:
    theta: np.ndarray
    kl: float
    grad_norm: float
    iterations: int
    trace: tuple[FitStep, ...]


def fit_theta_star(phat, model: LocalModel, init=None, tol: float = 1e-8,
                   max_iter: int = 50) -> FitResult:
    """Minimize the KL discrepancy from `phat` over the local model.

    Saturated models are inverted analytically (zero iterations).  Affine
    models run Newton-Raphson from `init` (default: a least-squares solve of
    design @ theta = carrier-adjusted log odds of phat), halving any step
    that would increase the discrepancy.  Stops when the gradient norm is at
    most `tol`; raises NonConvergence after `max_iter` updates.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    phat = _as_simplex(phat, model.n_levels)

    if model.kind == "saturated" and init is None:
        theta = saturated_theta_for(model, phat)
        value, grad, hess = kl_discrepancy(phat, model, theta)
        step = FitStep(theta, grad, hess, value)
        return FitResult(theta, value, float(np.linalg.norm(grad)), 0, (step,))

    if init is None:
        target = np.log(phat[1:] / phat[0]) - (model.log_carrier[1:] - model.log_carrier[0])
        theta, *_ = np.linalg.lstsq(model.design, target, rcond=None)
    else:
        theta = np.asarray(init, dtype=float).reshape(-1)
        if theta.shape != (model.dim,):
            raise DimensionMismatch(
                f"init has dimension {theta.shape[0]}, expected {model.dim}")
        if not np.all(np.isfinite(theta)):
            raise NonConvergence("init has non-finite entries")

    value, grad, hess = kl_discrepancy(phat, model, theta)
    trace = [FitStep(theta.copy(), grad.copy(), hess.copy(), value)]
    for it in range(1, max_iter + 1):
        if np.linalg.norm(grad) <= tol:
            return FitResult(theta, value, float(np.linalg.norm(grad)), it - 1, tuple(trace))
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SingularHessian(
                f"statistic covariance singular at iterate {it - 1}") from None
        new_theta = theta - step
        new_value, new_grad, new_hess = kl_discrepancy(phat, model, new_theta)
        halvings = 0
        while new_value > value + 1e-12 * (1.0 + abs(value)):
            halvings += 1
            if halvings > _MAX_HALVINGS:
                raise NonConvergence("step halving failed to decrease the discrepancy",
                                     trace=trace)
            step = step / 2.0
            new_theta = theta - step
            new_value, new_grad, new_hess = kl_discrepancy(phat, model, new_theta)
        theta, value, grad, hess = new_theta, new_value, new_grad, new_hess
        trace.append(FitStep(theta.copy(), grad.copy(), hess.copy(), value))
    if np.linalg.norm(grad) <= tol:
        return FitResult(theta, value, float(np.linalg.norm(grad)), max_iter, tuple(trace))
    raise NonConvergence(
        f"gradient norm {np.linalg.norm(grad):.3e} above {tol:.1e} after {max_iter} updates",
        trace=trace)


def prob_gradient(model: LocalModel, theta, level: int) -> np.ndarray:
    """d p(level)/d theta = p(level) (t(level) - tau(theta))."""
    p = local_distribution(model, theta)
    tau = p @ model.stats
    return p[level] * (model.stats[level] - tau)


def _prob_gradients(model: LocalModel, theta) -> np.ndarray:
    p = local_distribution(model, theta)
    tau = p @ model.stats
    return p[:, None] * (model.stats - tau)


# ---------------------------------------------------------------------------
# Normal prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalPriorBlock:
    """Mode, precision multiplier and statistic covariance at the mode.

    Approximates the conjugate prior by N(theta_star, (1/beta)
    nu_star^-1) near the mode.
    """

    theta_star: np.ndarray
    beta: float
    nu_star: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float).reshape(-1)
        nu = np.asarray(self.nu_star, dtype=float)
        if nu.shape != (theta.size, theta.size):
            raise DimensionMismatch(
                f"nu_star shape {nu.shape} does not match dimension {theta.size}")
        if not self.beta > 0.0:
            raise NonPositiveInterval(f"beta must be positive, got {self.beta!r}")
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "nu_star", nu)
        theta.flags.writeable = False
        nu.flags.writeable = False


@dataclass(frozen=True)
class NormalPrior:
    blocks: dict[BlockKey, NormalPriorBlock]
    kind: str = field(default="normal", init=False)


def normal_prior_score(block: NormalPriorBlock, theta) -> np.ndarray:
    """-beta nu(theta*) (theta - theta*), the log-density gradient."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != block.theta_star.shape:
        raise DimensionMismatch("theta dimension does not match the prior block")
    return -block.beta * (block.nu_star @ (theta - block.theta_star))


def normal_prior_information(block: NormalPriorBlock) -> np.ndarray:
    """beta nu(theta*); constant in theta."""
    return block.beta * block.nu_star


def normal_log_density(block: NormalPriorBlock, theta) -> float:
    """Log prior density up to its normalizing constant."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    diff = theta - block.theta_star
    return float(-0.5 * block.beta * diff @ block.nu_star @ diff)


def beta_from_intervals(model: LocalModel, theta_star, sd) -> tuple[float, np.ndarray]:
    """Precision multipliers beta(i) = g_i' nu^-1 g_i / SD(i)^2 and their
    minimum, where g_i is the probability gradient at theta_star.

    `sd` holds half interval widths per level; entries that are None or NaN
    mark non-informative levels and are skipped.  Returns (beta, per-level
    array with NaN at skipped levels).
    """
    sd_arr = np.array([np.nan if s is None else float(s) for s in sd])
    if sd_arr.shape != (model.n_levels,):
        raise DimensionMismatch(f"expected {model.n_levels} interval widths")
    informative = ~np.isnan(sd_arr)
    if not informative.any():
        raise NonPositiveInterval("no informative interval given")
    if np.any(sd_arr[informative] <= 0.0):
        raise NonPositiveInterval("interval widths must be positive")

    grads = _prob_gradients(model, theta_star)
    nu = stat_cov(model, theta_star)
    try:
        solved = np.linalg.solve(nu, grads.T)
    except np.linalg.LinAlgError:
        raise SingularCovariance("nu(theta*) is singular") from None
    quad = np.einsum("id,di->i", grads, solved)
    by_level = np.full(model.n_levels, np.nan)
    by_level[informative] = quad[informative] / sd_arr[informative] ** 2
    beta = float(np.nanmin(by_level))
    if not np.isfinite(beta) or beta <= 0.0:
        raise SingularCovariance(f"derived precision multiplier {beta!r} is unusable")
    return beta, by_level


# ---------------------------------------------------------------------------
# Dirichlet prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirichletPriorBlock:
    """Imaginary counts per child level; all non-negative."""

    alpha: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alpha, dtype=float).reshape(-1)
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise InvalidBestGuess("Dirichlet counts must be finite and non-negative")
        object.__setattr__(self, "alpha", arr)
        arr.flags.writeable = False

    @property
    def alpha_total(self) -> float:
        return float(self.alpha.sum())


@dataclass(frozen=True)
class DirichletPrior:
    blocks: dict[BlockKey, DirichletPriorBlock]
    kind: str = field(default="dirichlet", init=False)


def dirichlet_from_elicitation(phat, sd) -> tuple[DirichletPriorBlock, np.ndarray]:
    """Counts from a best guess and per-level interval half-widths.

    Per-level equivalent sample size (1 - p)p / SD^2 - 1; negative values
    are non-informative and clamp to zero; the minimum over informative
    levels scales the best guess into counts.  Returns (block, per-level
    sample sizes before clamping, NaN at non-informative levels).
    """
    phat = np.asarray(phat, dtype=float).reshape(-1)
    phat = _as_simplex(phat, phat.size)
    sd_arr = np.array([np.nan if s is None else float(s) for s in sd])
    if sd_arr.shape != phat.shape:
        raise DimensionMismatch("best guess and intervals differ in length")
    informative = ~np.isnan(sd_arr)
    if not informative.any():
        raise NonPositiveInterval("no informative interval given")
    if np.any(sd_arr[informative] <= 0.0):
        raise NonPositiveInterval("interval widths must be positive")
    if np.any((phat[informative] <= 0.0) | (phat[informative] >= 1.0)):
        raise InvalidBestGuess("equivalent sample sizes need 0 < p < 1 per level")

    by_level = np.full(phat.shape, np.nan)
    by_level[informative] = (1.0 - phat[informative]) * phat[informative] \
        / sd_arr[informative] ** 2 - 1.0
    total = max(0.0, float(np.nanmin(by_level)))
    return DirichletPriorBlock(alpha=phat * total), by_level


def dirichlet_prior_score(block: DirichletPriorBlock, model: LocalModel,
                          theta) -> np.ndarray:
    """sum_i alpha_i (t(i) - tau(theta))."""
    alpha = _block_alpha(block, model)
    return alpha @ model.stats - block.alpha_total * stat_mean(model, theta)


def dirichlet_prior_information(block: DirichletPriorBlock, model: LocalModel,
                                theta) -> np.ndarray:
    """alpha_total * nu(theta)."""
    _block_alpha(block, model)
    return block.alpha_total * stat_cov(model, theta)


def dirichlet_log_density(block: DirichletPriorBlock, model: LocalModel,
                          theta) -> float:
    """Log prior density of theta up to its normalizing constant:
    sum_i alpha_i (theta' t(i) - phi(theta))."""
    alpha = _block_alpha(block, model)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    return float(alpha @ (model.stats @ theta) - block.alpha_total * log_partition(model, theta))


def _block_alpha(block: DirichletPriorBlock, model: LocalModel) -> np.ndarray:
    if block.alpha.shape != (model.n_levels,):
        raise DimensionMismatch(
            f"prior has {block.alpha.shape[0]} counts, model has {model.n_levels} levels")
    return block.alpha


# ---------------------------------------------------------------------------
# Elicitation and whole-network pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElicitationBlock:
    """Best guess with per-level intervals [lo, hi]; None = no statement."""

    best_guess: np.ndarray
    intervals: tuple[tuple[float, float] | None, ...]

    def __post_init__(self):
        guess = np.asarray(self.best_guess, dtype=float).reshape(-1)
        guess = _as_simplex(guess, guess.size)
        if np.any(guess <= 0.0):
            raise InvalidBestGuess("best guess entries must be strictly positive")
        if len(self.intervals) != guess.size:
            raise DimensionMismatch("one interval per level required (None allowed)")
        for p, iv in zip(guess, self.intervals):
            if iv is None:
                continue
            lo, hi = float(iv[0]), float(iv[1])
            if hi - lo <= 0.0:
                raise NonPositiveInterval(f"interval [{lo}, {hi}] has non-positive width")
            if not (lo <= p <= hi):
                raise InvalidBestGuess(f"best guess {p} outside its interval [{lo}, {hi}]")
        object.__setattr__(self, "best_guess", guess)
        object.__setattr__(self, "intervals",
                           tuple(None if iv is None else (float(iv[0]), float(iv[1]))
                                 for iv in self.intervals))
        guess.flags.writeable = False

    def sd(self) -> np.ndarray:
        """Half interval widths; NaN where no interval was stated."""
        return np.array([np.nan if iv is None else (iv[1] - iv[0]) / 2.0
                         for iv in self.intervals])


@dataclass(frozen=True)
class Elicitation:
    """One generic elicitation per (tying class, parent configuration).

    Tied members share a class elicitation by construction; per-member
    statements are not representable, so they cannot conflict.
    """

    blocks: dict[BlockKey, ElicitationBlock]


def prior_log_density(network: Network, params, prior) -> float:
    """Sum of block log prior densities at the current parameters, each up
    to its normalizing constant."""
    total = 0.0
    for key in network.block_keys():
        block = prior.blocks.get(key)
        if block is None:
            raise MissingPriorBlock(f"prior missing block {network.block_key_str(key)!r}")
        if prior.kind == "normal":
            total += normal_log_density(block, params.get(key))
        else:
            total += dirichlet_log_density(block, network.local_model(key[0]),
                                           params.get(key))
    return total


@dataclass(frozen=True)
class BlockDiagnostics:
    key: BlockKey
    iterations: int
    kl: float
    warnings: tuple[str, ...]


def _covering_blocks(network: Network, elicitation: Elicitation):
    for key in network.block_keys():
        if key not in elicitation.blocks:
            raise MissingPriorBlock(
                f"elicitation missing block {network.block_key_str(key)!r}")
        yield key, elicitation.blocks[key]


def elicit_normal_prior(network: Network, elicitation: Elicitation, tol: float = 1e-8,
                        max_iter: int = 50) -> tuple[NormalPrior, list[BlockDiagnostics]]:
    """Fit a normal prior block for every parameter block of the network."""
    blocks: dict[BlockKey, NormalPriorBlock] = {}
    diags: list[BlockDiagnostics] = []
    for key, elic in _covering_blocks(network, elicitation):
        model = network.local_model(key[0])
        fit = fit_theta_star(elic.best_guess, model, tol=tol, max_iter=max_iter)
        beta, _ = beta_from_intervals(model, fit.theta, elic.sd())
        nu_star = stat_cov(model, fit.theta)
        blocks[key] = NormalPriorBlock(theta_star=fit.theta, beta=beta, nu_star=nu_star)
        warnings = ()
        if fit.kl > KL_WARNING_THRESHOLD:
            warnings = (
                f"discrepancy {fit.kl:.4f} nats between best guess and model; "
                "reconsider the statement or the structural restriction",)
        diags.append(BlockDiagnostics(key, fit.iterations, fit.kl, warnings))
    return NormalPrior(blocks), diags


def elicit_dirichlet_prior(network: Network,
                           elicitation: Elicitation) -> tuple[DirichletPrior, list[BlockDiagnostics]]:
    """Convert every block's elicitation into Dirichlet imaginary counts."""
    blocks: dict[BlockKey, DirichletPriorBlock] = {}
    diags: list[BlockDiagnostics] = []
    for key, elic in _covering_blocks(network, elicitation):
        block, by_level = dirichlet_from_elicitation(elic.best_guess, elic.sd())
        blocks[key] = block
        warnings = ()
        if np.nanmin(by_level) < 0.0:
            warnings = ("negative equivalent sample size clamped to 0 "
                        "(non-informative prior for this block)",)
        diags.append(BlockDiagnostics(key, 0, 0.0, warnings))
    return DirichletPrior(blocks), diags

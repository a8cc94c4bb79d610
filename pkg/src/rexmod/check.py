"""Self-verification harness: finite differences and enumeration cross-checks.

Backs the `check` CLI command.  Analytic score and information are compared
against central finite differences of the sample log-likelihood, and the
elimination engine against the brute-force enumeration oracle.  Everything
is desk-scale by construction; the enumeration cap refuses models the oracle
cannot enumerate rather than subsampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import derivatives, inference, oracle
from .model import Network, ParameterSet

__all__ = ["CheckReport", "CheckResult", "fd_gradient", "fd_hessian", "run_check_suite"]

ENUM_TOL = 1e-12


def fd_gradient(fn, x0: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x0 = np.asarray(x0, dtype=float)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        hi = x0.copy()
        lo = x0.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def fd_hessian(fn, x0: np.ndarray, step: float) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    hess = np.empty((n, n))
    f0 = fn(x0)
    for i in range(n):
        hi = x0.copy()
        lo = x0.copy()
        hi[i] += step
        lo[i] -= step
        hess[i, i] = (fn(hi) - 2.0 * f0 + fn(lo)) / step ** 2
        for j in range(i + 1, n):
            pp = x0.copy(); pp[i] += step; pp[j] += step
            pm = x0.copy(); pm[i] += step; pm[j] -= step
            mp = x0.copy(); mp[i] -= step; mp[j] += step
            mm = x0.copy(); mm[i] -= step; mm[j] -= step
            hess[i, j] = hess[j, i] = (fn(pp) - fn(pm) - fn(mp) + fn(mm)) / (4.0 * step ** 2)
    return hess


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| / max(1, |b|): relative with an absolute floor of 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(1.0, np.abs(b))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    error: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        out = {"name": self.name, "pass": self.passed,
               "error": self.error, "tolerance": self.tolerance}
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class CheckReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, error, tolerance, detail=""):
        self.checks.append(CheckResult(name, bool(error <= tolerance),
                                       float(error), float(tolerance), detail))

    def to_dict(self) -> dict:
        return {"pass": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _loglik_fn(network: Network, sample: inference.Sample):
    def fn(vec: np.ndarray) -> float:
        params = ParameterSet.from_vector(network, vec)
        return inference.sample_log_likelihood(network, params, sample)
    return fn


def run_check_suite(network: Network, params: ParameterSet, sample: inference.Sample,
                    grad_tol: float = 1e-6, hess_tol: float = 1e-4,
                    fd_step: float = 1e-5, enum_cap: int = 10 ** 6) -> CheckReport:
    """Run every cross-check on a desk-scale model and data set.

    The gradient check uses `fd_step`; the Hessian check uses 10 * fd_step,
    where second differences are better conditioned.
    """
    oracle.check_cap(network, enum_cap)
    report = CheckReport()

    # Elimination engine vs enumeration, row by row.
    lik_err = 0.0
    fam_err = 0.0
    pair_err = 0.0
    names = network.var_names
    for obs in sample:
        ve = inference.likelihood(network, params, obs)
        brute = oracle.enum_likelihood(network, params, obs)
        lik_err = max(lik_err, abs(ve - brute))
        for v in names:
            table = inference.family_marginal(network, params, obs, v).table
            ref = oracle.enum_posterior_table(network, params, obs, network.family_of(v))
            fam_err = max(fam_err, float(np.max(np.abs(table - ref))))
        for i, u in enumerate(names):
            for v in names[i + 1:]:
                table = inference.pair_family_marginal(network, params, obs, u, v).table
                sub = set(network.family_of(u)) | set(network.family_of(v))
                ref = oracle.enum_posterior_table(network, params, obs, sub)
                pair_err = max(pair_err, float(np.max(np.abs(table - ref))))
    report.add("likelihood-vs-enumeration", lik_err, ENUM_TOL)
    report.add("family-marginals-vs-enumeration", fam_err, ENUM_TOL)
    report.add("pair-family-marginals-vs-enumeration", pair_err, ENUM_TOL)

    # Score vs central finite differences of the sample log-likelihood.
    fn = _loglik_fn(network, sample)
    vec = params.to_vector()
    analytic = derivatives.sample_score(network, params, sample).as_vector()
    numeric = fd_gradient(fn, vec, fd_step)
    report.add("score-vs-fd-gradient", relative_error(analytic, numeric), grad_tol)

    # Information vs the negative finite-difference Hessian.
    hess_step = 10.0 * fd_step
    info = derivatives.sample_information(network, params, sample).as_matrix()
    numeric_hess = -fd_hessian(fn, vec, hess_step)
    hess_err = float(np.max(np.abs(info - numeric_hess))) if info.size else 0.0
    report.add("information-vs-fd-hessian", hess_err, hess_tol)

    # On fully complete data, off-diagonal information blocks must vanish.
    if all(obs.is_complete for obs in sample):
        info_blocks = derivatives.sample_information(network, params, sample)
        off = 0.0
        for (k1, k2), b in info_blocks.blocks.items():
            if k1 != k2:
                off = max(off, float(np.max(np.abs(b))) if b.size else 0.0)
        report.add("complete-data-block-diagonality", off, 0.0,
                   detail="off-diagonal blocks on complete data")

    return report

"""Exact inference over incomplete observations.

An observation stores one candidate level set per variable: a singleton for
an observed value, the full level set for a missing value, any proper subset
for an imprecise value.  The observation's probability is the total
probability of its completion set (the Cartesian product of candidate sets),
and posterior tables over variable subsets divide by that probability.

Queries run by variable elimination with candidate sets absorbed as 0/1
indicators on each variable's own table factor.  Elimination follows a
greedy min-degree order with ties broken by declaration order, so repeated
runs produce identical floating-point output.  A brute-force enumeration
oracle for the same quantities lives in `rexmod.oracle`.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    UnknownLevel,
    UnknownVariable,
    ZeroEvidenceProbability,
)
from .model import Network, ParameterSet, local_distribution

__all__ = [
    "CountTable",
    "MarginalTable",
    "Observation",
    "Sample",
    "completions",
    "expected_counts",
    "family_marginal",
    "likelihood",
    "pair_family_marginal",
    "posterior_marginal",
    "sample_log_likelihood",
]


@dataclass(frozen=True)
class Observation:
    """Per-variable candidate level sets, as sorted index tuples in declared
    variable order.  Every candidate set is non-empty."""

    candidates: tuple[tuple[int, ...], ...]

    @classmethod
    def from_mapping(cls, network: Network, values: Mapping) -> "Observation":
        """Build from {variable: label | list of labels | None}.

        A missing key or None means the variable is unobserved; a list with
        two or more labels is an imprecise value.
        """
        extra = [k for k in values if k not in network.var_names]
        if extra:
            raise UnknownVariable(f"observation names unknown variables {extra}")
        cand = []
        for var in network.variables:
            val = values.get(var.name)
            if val is None:
                cand.append(tuple(range(var.n_levels)))
            elif isinstance(val, str):
                cand.append((var.level_index(val),))
            else:
                labs = list(val)
                if not labs:
                    raise UnknownLevel(f"empty candidate set for {var.name!r}")
                idx = sorted({var.level_index(lab) for lab in labs})
                cand.append(tuple(idx))
        return cls(tuple(cand))

    @classmethod
    def complete(cls, network: Network, x) -> "Observation":
        idx = network.config_to_indices(x)
        return cls(tuple((i,) for i in idx))

    @classmethod
    def missing(cls, network: Network) -> "Observation":
        return cls(tuple(tuple(range(v.n_levels)) for v in network.variables))

    @property
    def is_complete(self) -> bool:
        return all(len(c) == 1 for c in self.candidates)

    def n_completions(self) -> int:
        n = 1
        for c in self.candidates:
            n *= len(c)
        return n


@dataclass(frozen=True)
class Sample:
    """An ordered list of independent observations on one network."""

    observations: tuple[Observation, ...]

    def __init__(self, observations):
        object.__setattr__(self, "observations", tuple(observations))

    def __len__(self):
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def __getitem__(self, i):
        return self.observations[i]


def _check_observation(network: Network, obs: Observation):
    if len(obs.candidates) != len(network.variables):
        raise DimensionMismatch(
            f"observation covers {len(obs.candidates)} variables, "
            f"network has {len(network.variables)}")
    for var, cand in zip(network.variables, obs.candidates):
        if not cand:
            raise UnknownLevel(f"empty candidate set for {var.name!r}")
        if any(i < 0 or i >= var.n_levels for i in cand):
            raise UnknownLevel(f"candidate index out of range for {var.name!r}")


@dataclass(frozen=True)
class MarginalTable:
    """Posterior probability table over a variable subset.

    `vars` follow declared variable order; `table` axes match `vars` and
    `levels` lists each axis's level labels in index order.
    """

    vars: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]
    table: np.ndarray

    def __post_init__(self):
        self.table.flags.writeable = False

    def prob(self, assignment) -> float:
        """Probability of one configuration of `vars` (mapping or labels)."""
        return float(self.table[self._index(assignment)])

    def _index(self, assignment) -> tuple[int, ...]:
        if isinstance(assignment, Mapping):
            labels = [assignment[v] for v in self.vars]
        else:
            labels = list(assignment)
        if len(labels) != len(self.vars):
            raise DimensionMismatch(
                f"assignment has {len(labels)} entries, table has {len(self.vars)} variables")
        out = []
        for axis, lab in enumerate(labels):
            try:
                out.append(self.levels[axis].index(lab))
            except ValueError:
                raise UnknownLevel(
                    f"{lab!r} is not a level of {self.vars[axis]!r}") from None
        return tuple(out)


class CountTable(MarginalTable):
    """Expected-count table; same layout as MarginalTable but sums to the
    number of observations instead of 1."""


def _with_levels(network: Network, cls, sub: tuple[str, ...], table: np.ndarray):
    levels = tuple(network.variable(v).levels for v in sub)
    return cls(sub, levels, table)


# ---------------------------------------------------------------------------
# Variable elimination
# ---------------------------------------------------------------------------


class _Factor:
    __slots__ = ("vars", "table")

    def __init__(self, vars_: tuple[int, ...], table: np.ndarray):
        self.vars = vars_  # variable positions, strictly increasing
        self.table = table


def _multiply(a: _Factor, b: _Factor) -> _Factor:
    union = tuple(sorted(set(a.vars) | set(b.vars)))
    pos = {v: i for i, v in enumerate(union)}

    def expand(f: _Factor) -> np.ndarray:
        shape = [1] * len(union)
        for v, n in zip(f.vars, f.table.shape):
            shape[pos[v]] = n
        return f.table.reshape(shape)

    return _Factor(union, expand(a) * expand(b))


def _sum_out(f: _Factor, var: int) -> _Factor:
    ax = f.vars.index(var)
    return _Factor(f.vars[:ax] + f.vars[ax + 1:], f.table.sum(axis=ax))


def _cpt_factor(network: Network, params: ParameterSet, var_name: str,
                mask: np.ndarray) -> _Factor:
    """Conditional table of one variable as a factor over its family, with
    the variable's candidate-set indicator multiplied onto the child axis."""
    pars = network.parents_of(var_name)
    var = network.variable(var_name)
    pshape = tuple(network.variable(p).n_levels for p in pars)
    rows = np.empty(pshape + (var.n_levels,), dtype=float)
    model = network.local_model(network.class_of(var_name).id)
    for cfg in (np.ndindex(*pshape) if pshape else [()]):
        key = network.block_key_for(var_name, tuple(int(i) for i in cfg))
        rows[cfg] = local_distribution(model, params.get(key))
    rows = rows * mask

    src_order = [network.index_of(p) for p in pars] + [network.index_of(var_name)]
    dst_sorted = sorted(src_order)
    perm = [src_order.index(v) for v in dst_sorted]
    return _Factor(tuple(dst_sorted), np.transpose(rows, axes=perm))


def _evidence_factors(network: Network, params: ParameterSet,
                      obs: Observation) -> list[_Factor]:
    factors = []
    for pos, var in enumerate(network.variables):
        mask = np.zeros(var.n_levels)
        mask[list(obs.candidates[pos])] = 1.0
        factors.append(_cpt_factor(network, params, var.name, mask))
    return factors


def _min_degree_order(scopes: list[set[int]], eliminate: set[int]) -> list[int]:
    # Greedy min-degree on the interaction graph, smallest position on ties.
    adj: dict[int, set[int]] = {}
    for scope in scopes:
        for v in scope:
            adj.setdefault(v, set()).update(scope - {v})
    order = []
    remaining = set(eliminate)
    while remaining:
        v = min(remaining, key=lambda u: (len(adj.get(u, set())), u))
        order.append(v)
        neigh = adj.pop(v, set())
        for u in neigh:
            adj[u].discard(v)
            adj[u].update(neigh - {u})
        remaining.discard(v)
    return order


def _run_ve(network: Network, factors: list[_Factor], keep: set[int]) -> _Factor:
    eliminate = set(range(len(network.variables))) - keep
    order = _min_degree_order([set(f.vars) for f in factors], eliminate)
    live = list(factors)
    for v in order:
        bucket = [f for f in live if v in f.vars]
        live = [f for f in live if v not in f.vars]
        if not bucket:
            continue
        prod = bucket[0]
        for f in bucket[1:]:
            prod = _multiply(prod, f)
        live.append(_sum_out(prod, v))
    if not live:
        return _Factor((), np.array(1.0))
    result = live[0]
    for f in live[1:]:
        result = _multiply(result, f)
    return result


def _posterior_table(network: Network, params: ParameterSet, obs: Observation,
                     subset: tuple[str, ...]) -> tuple[np.ndarray, float]:
    """Unnormalized-then-normalized table over `subset` plus the evidence
    probability.  Raises ZeroEvidenceProbability when p(y) = 0."""
    _check_observation(network, obs)
    keep = {network.index_of(v) for v in subset}
    factors = _evidence_factors(network, params, obs)
    result = _run_ve(network, factors, keep)
    assert result.vars == tuple(sorted(keep))
    total = float(result.table.sum())
    if total <= 0.0:
        raise ZeroEvidenceProbability("observation has probability zero")
    return result.table / total, total


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def completions(network: Network, obs: Observation) -> Iterator[tuple[str, ...]]:
    """All complete configurations consistent with the observation, as label
    tuples in declared variable order, row-major."""
    _check_observation(network, obs)
    per_var = [
        [var.levels[i] for i in cand]
        for var, cand in zip(network.variables, obs.candidates)
    ]
    return itertools.product(*per_var)


def likelihood(network: Network, params: ParameterSet, obs: Observation) -> float:
    """p(y | theta): total probability of the completion set.  Zero is a
    legal return here; posterior queries treat it as an error."""
    _check_observation(network, obs)
    factors = _evidence_factors(network, params, obs)
    return float(_run_ve(network, factors, set()).table)


def sample_log_likelihood(network: Network, params: ParameterSet, sample: Sample,
                          threads: int = 1) -> float:
    """Sum of per-observation log likelihoods, reduced in row order."""

    def one(i_obs):
        i, obs = i_obs
        p = likelihood(network, params, obs)
        if p <= 0.0:
            raise ZeroEvidenceProbability(f"observation {i} has probability zero", row=i)
        return float(np.log(p))

    return sum(_map_rows(one, sample, threads))


def _map_rows(fn, sample: Sample, threads: int):
    items = list(enumerate(sample))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def posterior_marginal(network: Network, params: ParameterSet, obs: Observation,
                       subset) -> MarginalTable:
    """p(i_A | y, theta) over the subset A, ordered by declaration."""
    sub = tuple(sorted({str(v) for v in subset}, key=network.index_of))
    if not sub:
        raise DimensionMismatch("marginal subset is empty")
    table, _ = _posterior_table(network, params, obs, sub)
    return _with_levels(network, MarginalTable, sub, table)


def family_marginal(network: Network, params: ParameterSet, obs: Observation,
                    var_name: str) -> MarginalTable:
    """Posterior over fa(v) = {v} plus parents."""
    return posterior_marginal(network, params, obs, network.family_of(var_name))


def pair_family_marginal(network: Network, params: ParameterSet, obs: Observation,
                         u: str, v: str) -> MarginalTable:
    """Posterior over fa(u) union fa(v), shared variables counted once."""
    subset = set(network.family_of(u)) | set(network.family_of(v))
    return posterior_marginal(network, params, obs, subset)


def expected_counts(network: Network, params: ParameterSet, sample: Sample,
                    subset, threads: int = 1) -> CountTable:
    """n*(i_A) = sum over rows of p(i_A | y_row, theta); sums to len(sample)."""
    sub = tuple(sorted({str(v) for v in subset}, key=network.index_of))
    if not sub:
        raise DimensionMismatch("count subset is empty")

    def one(i_obs):
        i, obs = i_obs
        try:
            table, _ = _posterior_table(network, params, obs, sub)
        except ZeroEvidenceProbability:
            raise ZeroEvidenceProbability(
                f"observation {i} has probability zero", row=i) from None
        return table

    shape = tuple(network.variable(v).n_levels for v in sub)
    total = np.zeros(shape)
    for table in _map_rows(one, sample, threads):
        total += table
    return _with_levels(network, CountTable, sub, total)

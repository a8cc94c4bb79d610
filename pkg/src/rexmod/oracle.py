"""Brute-force enumeration oracle.

Every quantity the elimination engine produces is recomputed here by a
literal sum over the completion set, with compensated (fsum) accumulation
for scalars and a fixed completion order for tables.  Exponential in the
number of variables; intended for desk-scale verification only, which is
why callers pass an explicit configuration cap.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import CapExceeded, ZeroEvidenceProbability
from .inference import Observation
from .model import Network, ParameterSet, local_distribution

__all__ = ["check_cap", "enum_likelihood", "enum_posterior_table"]


def check_cap(network: Network, cap: int):
    if network.n_configurations > cap:
        raise CapExceeded(
            f"model has {network.n_configurations} complete configurations, "
            f"enumeration cap is {cap}")


class _DistCache:
    """Local distributions per parameter block, computed once."""

    def __init__(self, network: Network, params: ParameterSet):
        self.network = network
        self.dists = {
            key: local_distribution(network.local_model(key[0]), theta)
            for key, theta in params.items()
        }
        self.parent_pos = {
            v.name: tuple(network.index_of(p) for p in network.parents_of(v.name))
            for v in network.variables
        }

    def joint(self, idx: tuple[int, ...]) -> float:
        prob = 1.0
        for pos, var in enumerate(self.network.variables):
            pidx = tuple(idx[q] for q in self.parent_pos[var.name])
            key = self.network.block_key_for(var.name, pidx)
            prob *= float(self.dists[key][idx[pos]])
        return prob


def _completion_indices(obs: Observation):
    return itertools.product(*obs.candidates)


def enum_likelihood(network: Network, params: ParameterSet, obs: Observation) -> float:
    cache = _DistCache(network, params)
    return math.fsum(cache.joint(idx) for idx in _completion_indices(obs))


def enum_posterior_table(network: Network, params: ParameterSet, obs: Observation,
                         subset) -> np.ndarray:
    """Posterior table over `subset` (declared order) by direct enumeration."""
    sub = tuple(sorted({str(v) for v in subset}, key=network.index_of))
    positions = [network.index_of(v) for v in sub]
    shape = tuple(network.variable(v).n_levels for v in sub)
    cache = _DistCache(network, params)
    table = np.zeros(shape)
    for idx in _completion_indices(obs):
        cell = tuple(idx[p] for p in positions)
        table[cell] += cache.joint(idx)
    total = table.sum()
    if total <= 0.0:
        raise ZeroEvidenceProbability("observation has probability zero")
    return table / total

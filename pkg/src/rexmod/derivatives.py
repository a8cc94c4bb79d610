"""Score and observed information under incomplete data.

The log-likelihood gradient (score) and negative Hessian (observed
information) decompose into blocks indexed by (tying class, parent
configuration).  For one observation y with posterior family tables
p(i_fa(v) | y, theta):

    score block      S_k  = sum_{v in class} sum_{i_fa(v)} p(i_fa(v)|y)
                            [pa(v) = config] (t(i_v) - tau_k)
    information      I_kl = S_k S_l' - U_kl + [k = l] m_k nu_k

where U_kl sums pair-family posteriors against centered statistics over
ordered member pairs and m_k is the posterior mass on the block's parent
configuration.  The S S' - U part is accumulated member pair by member pair
so that on complete data the two sides cancel bitwise and the information
comes out exactly block-diagonal.

Sample versions add per-row quantities in row order.  Posterior versions add
the prior score/information blocks, which are block-diagonal because the
prior factorizes over blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingPriorBlock, ZeroEvidenceProbability
from .inference import Observation, Sample, _map_rows, _posterior_table
from .model import BlockKey, Network, ParameterSet, stat_cov, stat_mean
from .priors import (
    DirichletPrior,
    NormalPrior,
    dirichlet_prior_information,
    dirichlet_prior_score,
    normal_prior_information,
    normal_prior_score,
)

__all__ = [
    "InfoMatrix",
    "ScoreVector",
    "information",
    "local_information",
    "local_score",
    "posterior_information",
    "posterior_score",
    "prior_information_matrix",
    "prior_score_vector",
    "sample_information",
    "sample_score",
    "score",
]


def _resolve_key(network: Network, class_id: str, config) -> BlockKey:
    cfg = tuple(config)
    if cfg and isinstance(cfg[0], str):
        cfg = network.config_indices(class_id, cfg)
    key = (class_id, cfg)
    network.block_order(key)
    return key


@dataclass(frozen=True)
class ScoreVector:
    """Score blocks laid out like the parameter set."""

    network: Network
    blocks: dict[BlockKey, np.ndarray]

    def block(self, class_id: str, config) -> np.ndarray:
        return self.blocks[_resolve_key(self.network, class_id, config)]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.blocks[k] for k in self.network.block_keys()])

    def __add__(self, other: "ScoreVector") -> "ScoreVector":
        return ScoreVector(self.network, {
            k: self.blocks[k] + other.blocks[k] for k in self.network.block_keys()})


@dataclass(frozen=True)
class InfoMatrix:
    """Observed-information blocks, stored for block pairs in canonical
    order; the mirrored block is the transpose."""

    network: Network
    blocks: dict[tuple[BlockKey, BlockKey], np.ndarray]

    def block(self, block_u, block_v) -> np.ndarray:
        ku = _resolve_key(self.network, *block_u)
        kv = _resolve_key(self.network, *block_v)
        if self.network.block_order(ku) <= self.network.block_order(kv):
            return self.blocks[(ku, kv)]
        return self.blocks[(kv, ku)].T

    def as_matrix(self) -> np.ndarray:
        net = self.network
        keys = net.block_keys()
        offsets = {}
        pos = 0
        for k in keys:
            offsets[k] = pos
            pos += net.block_dim(k[0])
        out = np.zeros((pos, pos))
        for (k1, k2), b in self.blocks.items():
            r, c = offsets[k1], offsets[k2]
            out[r:r + b.shape[0], c:c + b.shape[1]] = b
            if k1 != k2:
                out[c:c + b.shape[1], r:r + b.shape[0]] = b.T
        return out

    def __add__(self, other: "InfoMatrix") -> "InfoMatrix":
        return InfoMatrix(self.network, {
            pair: self.blocks[pair] + other.blocks[pair] for pair in self.blocks})


# ---------------------------------------------------------------------------
# Per-observation machinery
# ---------------------------------------------------------------------------


class _RowCache:
    """Memoizes family and pair-family posterior tables for one observation."""

    def __init__(self, network: Network, params: ParameterSet, obs: Observation):
        self.network = network
        self.params = params
        self.obs = obs
        self._family: dict[str, np.ndarray] = {}
        self._pair: dict[tuple[str, str], tuple[tuple[str, ...], np.ndarray]] = {}

    def family_view(self, v: str) -> np.ndarray:
        """Family posterior with axes (parents in declared parent order, child)."""
        got = self._family.get(v)
        if got is None:
            net = self.network
            sub = net.family_of(v)
            table, _ = _posterior_table(net, self.params, self.obs, sub)
            order = list(net.parents_of(v)) + [v]
            got = np.transpose(table, axes=[sub.index(name) for name in order])
            self._family[v] = got
        return got

    def pair_table(self, u: str, v: str) -> tuple[tuple[str, ...], np.ndarray]:
        """Posterior over fa(u) | fa(v) union, axes in declared variable order."""
        memo = (u, v) if u <= v else (v, u)
        got = self._pair.get(memo)
        if got is None:
            net = self.network
            sub = tuple(sorted(set(net.family_of(u)) | set(net.family_of(v)),
                               key=net.index_of))
            table, _ = _posterior_table(net, self.params, self.obs, sub)
            got = (sub, table)
            self._pair[memo] = got
        return got


class _BlockMath:
    """Per-block statistic means, centered statistics and covariances."""

    def __init__(self, network: Network, params: ParameterSet):
        self.network = network
        self.params = params
        self._tau: dict[BlockKey, np.ndarray] = {}
        self._centered: dict[BlockKey, np.ndarray] = {}
        self._nu: dict[BlockKey, np.ndarray] = {}

    def tau(self, key: BlockKey) -> np.ndarray:
        got = self._tau.get(key)
        if got is None:
            model = self.network.local_model(key[0])
            got = stat_mean(model, self.params.get(key))
            self._tau[key] = got
        return got

    def centered(self, key: BlockKey) -> np.ndarray:
        got = self._centered.get(key)
        if got is None:
            model = self.network.local_model(key[0])
            got = model.stats - self.tau(key)
            self._centered[key] = got
        return got

    def nu(self, key: BlockKey) -> np.ndarray:
        got = self._nu.get(key)
        if got is None:
            model = self.network.local_model(key[0])
            got = stat_cov(model, self.params.get(key))
            self._nu[key] = got
        return got


def _member_configs(network: Network, v: str) -> list[tuple[int, ...]]:
    shape = tuple(network.variable(p).n_levels for p in network.parents_of(v))
    return [tuple(int(i) for i in cfg) for cfg in np.ndindex(*shape)] if shape else [()]


def _member_scores(network: Network, cache: _RowCache, bm: _BlockMath,
                   v: str) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Per parent configuration, this member's score contribution
    sum_i w(i) (t(i) - tau); rows follow row-major configuration order."""
    class_id = network.class_of(v).id
    model = network.local_model(class_id)
    fam = cache.family_view(v)
    flat = fam.reshape(-1, model.n_levels)
    cfgs = _member_configs(network, v)
    rows = np.empty((len(cfgs), model.dim))
    for j, cfg in enumerate(cfgs):
        w = flat[j]
        rows[j] = model.stats.T @ w - w.sum() * bm.tau((class_id, cfg))
    return cfgs, rows


def _row_scores(network: Network, cache: _RowCache,
                bm: _BlockMath) -> dict[BlockKey, np.ndarray]:
    scores = {key: np.zeros(network.block_dim(key[0])) for key in network.block_keys()}
    for v in network.var_names:
        class_id = network.class_of(v).id
        cfgs, rows = _member_scores(network, cache, bm, v)
        for cfg, row in zip(cfgs, rows):
            scores[(class_id, cfg)] += row
    return scores


def _pair_weights(network: Network, cache: _RowCache, u: str,
                  v: str) -> dict[tuple[tuple[int, ...], tuple[int, ...]], np.ndarray]:
    """Joint posterior weight on (x_u, x_v) per (pa(u), pa(v)) configuration
    pair, from the pair-family table.  Zero cells are skipped, so complete
    observations yield single one-hot entries."""
    sub, table = cache.pair_table(u, v)
    axis = {name: i for i, name in enumerate(sub)}
    pa_u = [axis[p] for p in network.parents_of(u)]
    pa_v = [axis[p] for p in network.parents_of(v)]
    au, av = axis[u], axis[v]
    n_u = network.variable(u).n_levels
    n_v = network.variable(v).n_levels
    out: dict[tuple[tuple[int, ...], tuple[int, ...]], np.ndarray] = {}
    for idx, val in np.ndenumerate(table):
        if val == 0.0:
            continue
        key = (tuple(idx[a] for a in pa_u), tuple(idx[a] for a in pa_v))
        J = out.get(key)
        if J is None:
            J = out[key] = np.zeros((n_u, n_v))
        J[idx[au], idx[av]] += val
    return out


def _parent_masses(network: Network, cache: _RowCache) -> dict[BlockKey, float]:
    masses = {key: 0.0 for key in network.block_keys()}
    for v in network.var_names:
        class_id = network.class_of(v).id
        fam = cache.family_view(v)
        flat = fam.sum(axis=-1).reshape(-1)
        for j, cfg in enumerate(_member_configs(network, v)):
            masses[(class_id, cfg)] += float(flat[j])
    return masses


def _first_term_blocks(network: Network, cache: _RowCache, bm: _BlockMath,
                       member_scores: dict[str, tuple[list, np.ndarray]]):
    """S S' - U accumulated per ordered member pair, keyed by canonical
    block pairs.  Pairing the two sums member-wise makes them cancel
    bitwise on complete data."""
    acc: dict[tuple[BlockKey, BlockKey], np.ndarray] = {}
    order = network.block_order

    def add(k1: BlockKey, k2: BlockKey, C: np.ndarray):
        got = acc.get((k1, k2))
        if got is None:
            acc[(k1, k2)] = C.copy()
        else:
            got += C

    names = network.var_names
    for i, u in enumerate(names):
        cu = network.class_of(u).id
        cfgs_u, rows_u = member_scores[u]
        for v in names[i:]:
            cv = network.class_of(v).id
            cfgs_v, rows_v = member_scores[v]
            J = _pair_weights(network, cache, u, v)
            same_member = u == v
            for a, pu in enumerate(cfgs_u):
                b_start = a if same_member else 0
                for b in range(b_start, len(cfgs_v)):
                    pv = cfgs_v[b]
                    Jm = J.get((pu, pv))
                    su, sv = rows_u[a], rows_v[b]
                    if Jm is None and not (su.any() and sv.any()):
                        continue
                    ku, kv = (cu, pu), (cv, pv)
                    C = np.outer(su, sv)
                    if Jm is not None:
                        C = C - bm.centered(ku).T @ Jm @ bm.centered(kv)
                    if ku == kv:
                        add(ku, ku, C if same_member else C + C.T)
                    elif order(ku) < order(kv):
                        add(ku, kv, C)
                    else:
                        add(kv, ku, C.T)
    return acc


def _row_information_blocks(network: Network, params: ParameterSet,
                            obs: Observation) -> dict[tuple[BlockKey, BlockKey], np.ndarray]:
    cache = _RowCache(network, params, obs)
    bm = _BlockMath(network, params)
    member_scores = {v: _member_scores(network, cache, bm, v) for v in network.var_names}
    acc = _first_term_blocks(network, cache, bm, member_scores)
    masses = _parent_masses(network, cache)

    keys = network.block_keys()
    blocks = {}
    for a, k1 in enumerate(keys):
        d1 = network.block_dim(k1[0])
        for k2 in keys[a:]:
            d2 = network.block_dim(k2[0])
            B = acc.get((k1, k2))
            B = np.zeros((d1, d2)) if B is None else B
            if k1 == k2:
                B = B + masses[k1] * bm.nu(k1)
            blocks[(k1, k2)] = B
    return blocks


# ---------------------------------------------------------------------------
# Public operations: score
# ---------------------------------------------------------------------------


def local_score(network: Network, params: ParameterSet, obs: Observation,
                class_id: str, config) -> np.ndarray:
    """One score block: the sum over class members of the posterior-weighted
    centered statistics at the given parent configuration."""
    key = _resolve_key(network, class_id, config)
    cache = _RowCache(network, params, obs)
    bm = _BlockMath(network, params)
    total = np.zeros(network.block_dim(class_id))
    for v in network.tying_class(class_id).members:
        cfgs, rows = _member_scores(network, cache, bm, v)
        total += rows[cfgs.index(key[1])]
    return total


def score(network: Network, params: ParameterSet, obs: Observation) -> ScoreVector:
    """Gradient of log p(y | theta), in blocks."""
    cache = _RowCache(network, params, obs)
    bm = _BlockMath(network, params)
    return ScoreVector(network, _row_scores(network, cache, bm))


def sample_score(network: Network, params: ParameterSet, sample: Sample,
                 threads: int = 1) -> ScoreVector:
    """Gradient of the sample log-likelihood: per-row scores added in row
    order."""

    def one(i_obs):
        i, obs = i_obs
        try:
            return score(network, params, obs)
        except ZeroEvidenceProbability:
            raise ZeroEvidenceProbability(
                f"observation {i} has probability zero", row=i) from None

    total = {key: np.zeros(network.block_dim(key[0])) for key in network.block_keys()}
    for sv in _map_rows(one, sample, threads):
        for key, vec in sv.blocks.items():
            total[key] += vec
    return ScoreVector(network, total)


# ---------------------------------------------------------------------------
# Public operations: information
# ---------------------------------------------------------------------------


def local_information(network: Network, params: ParameterSet, obs: Observation,
                      block_u, block_v) -> np.ndarray:
    """One information block for the pair of (class id, parent config)."""
    ku = _resolve_key(network, *block_u)
    kv = _resolve_key(network, *block_v)
    cache = _RowCache(network, params, obs)
    bm = _BlockMath(network, params)
    total = np.zeros((network.block_dim(ku[0]), network.block_dim(kv[0])))
    for u in network.tying_class(ku[0]).members:
        cfgs_u, rows_u = _member_scores(network, cache, bm, u)
        su = rows_u[cfgs_u.index(ku[1])]
        for v in network.tying_class(kv[0]).members:
            cfgs_v, rows_v = _member_scores(network, cache, bm, v)
            sv = rows_v[cfgs_v.index(kv[1])]
            C = np.outer(su, sv)
            Jm = _pair_weights(network, cache, u, v).get((ku[1], kv[1]))
            if Jm is not None:
                C = C - bm.centered(ku).T @ Jm @ bm.centered(kv)
            total += C
    if ku == kv:
        mass = 0.0
        for v in network.tying_class(ku[0]).members:
            fam = cache.family_view(v)
            flat = fam.sum(axis=-1).reshape(-1)
            mass += float(flat[_member_configs(network, v).index(ku[1])])
        total += mass * bm.nu(ku)
    return total


def information(network: Network, params: ParameterSet, obs: Observation) -> InfoMatrix:
    """Observed information -d^2 log p(y|theta), all blocks."""
    return InfoMatrix(network, _row_information_blocks(network, params, obs))


def sample_information(network: Network, params: ParameterSet, sample: Sample,
                       threads: int = 1) -> InfoMatrix:
    """Observed sample information: per-row informations added in row order."""

    def one(i_obs):
        i, obs = i_obs
        try:
            return _row_information_blocks(network, params, obs)
        except ZeroEvidenceProbability:
            raise ZeroEvidenceProbability(
                f"observation {i} has probability zero", row=i) from None

    keys = network.block_keys()
    total = {}
    for a, k1 in enumerate(keys):
        for k2 in keys[a:]:
            total[(k1, k2)] = np.zeros((network.block_dim(k1[0]), network.block_dim(k2[0])))
    for blocks in _map_rows(one, sample, threads):
        for pair, b in blocks.items():
            total[pair] += b
    return InfoMatrix(network, total)


# ---------------------------------------------------------------------------
# Posterior score and information
# ---------------------------------------------------------------------------


def _prior_block(network: Network, prior, key: BlockKey):
    block = prior.blocks.get(key)
    if block is None:
        raise MissingPriorBlock(f"prior missing block {network.block_key_str(key)!r}")
    return block


def prior_score_vector(network: Network, params: ParameterSet, prior) -> ScoreVector:
    """Prior score blocks d log p(theta_block)/d theta at the current
    parameters, for either prior family."""
    blocks = {}
    for key in network.block_keys():
        pb = _prior_block(network, prior, key)
        if prior.kind == "normal":
            blocks[key] = normal_prior_score(pb, params.get(key))
        else:
            blocks[key] = dirichlet_prior_score(pb, network.local_model(key[0]),
                                                params.get(key))
    return ScoreVector(network, blocks)


def prior_information_matrix(network: Network, params: ParameterSet, prior) -> InfoMatrix:
    """Prior information: block-diagonal because the prior factorizes."""
    keys = network.block_keys()
    blocks = {}
    for a, k1 in enumerate(keys):
        for k2 in keys[a:]:
            if k1 == k2:
                pb = _prior_block(network, prior, k1)
                if prior.kind == "normal":
                    blocks[(k1, k1)] = normal_prior_information(pb)
                else:
                    blocks[(k1, k1)] = dirichlet_prior_information(
                        pb, network.local_model(k1[0]), params.get(k1))
            else:
                blocks[(k1, k2)] = np.zeros(
                    (network.block_dim(k1[0]), network.block_dim(k2[0])))
    return InfoMatrix(network, blocks)


def posterior_score(network: Network, params: ParameterSet, sample: Sample,
                    prior, threads: int = 1) -> ScoreVector:
    """Gradient of the log-posterior: data score plus prior score."""
    return sample_score(network, params, sample, threads=threads) \
        + prior_score_vector(network, params, prior)


def posterior_information(network: Network, params: ParameterSet, sample: Sample,
                          prior, threads: int = 1) -> InfoMatrix:
    """Negative Hessian of the log-posterior: data plus prior information."""
    return sample_information(network, params, sample, threads=threads) \
        + prior_information_matrix(network, params, prior)

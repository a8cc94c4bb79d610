"""Core model objects: discrete variables, DAG structure, tying classes and
exponential-family local models.

The joint distribution factorizes over a DAG into conditional tables, one per
variable; tied variables share a single generic table.  Each table cell (one
parent configuration) holds an exponential-family distribution over the
child's levels,

    p(i | theta) = b(i) * exp(theta' t(i) - phi(theta)),
    phi(theta)   = log sum_i b(i) * exp(theta' t(i)),

where the statistics t are reference-cell indicators for a saturated table
(dimension = levels - 1, first level is the reference) or their image
t = T's under a full-column-rank design T for an affine sub-model.  The mean
tau(theta) and covariance nu(theta) of the statistic are the first two
derivatives of phi and drive every likelihood derivative in the package.

All objects are immutable after construction and every operation here is a
pure function, so concurrent reads need no synchronization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DimensionMismatch,
    InvalidLocalModel,
    ModelError,
    NonFinite,
    TyingShapeMismatch,
    UnknownLevel,
    UnknownVariable,
    ZeroProbability,
)

__all__ = [
    "BlockKey",
    "LocalModel",
    "Network",
    "ParameterSet",
    "TyingClass",
    "Variable",
    "build_network",
    "joint_prob",
    "linear_design_from_values",
    "local_distribution",
    "log_partition",
    "probs_from_theta",
    "stat_cov",
    "stat_mean",
    "theta_from_probs",
]

# A parameter block is addressed by (tying class id, parent configuration),
# the configuration given as level indices of the class representative's
# parents in declared parent order.
BlockKey = tuple[str, tuple[int, ...]]

NO_PARENTS_KEY = "_"

# Characters with syntactic meaning in the file formats.
_RESERVED_CHARS = set('|;{},"')


def _check_token(kind: str, token) -> str:
    if not isinstance(token, str) or not token or token != token.strip():
        raise ModelError(f"{kind} must be a non-empty trimmed string, got {token!r}")
    if token in ("?", NO_PARENTS_KEY):
        raise ModelError(f"{kind} {token!r} is reserved syntax")
    bad = _RESERVED_CHARS.intersection(token)
    if bad:
        raise ModelError(f"{kind} {token!r} contains reserved character(s) {sorted(bad)}")
    return token


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Variable:
    """A finite discrete variable with ordered levels.

    `values` optionally attaches a real number to each level, for building
    trend-style affine designs.
    """

    name: str
    levels: tuple[str, ...]
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        _check_token("variable name", self.name)
        object.__setattr__(self, "levels", tuple(self.levels))
        for lab in self.levels:
            _check_token("level label", lab)
        if len(self.levels) < 2:
            raise ModelError(f"variable {self.name!r} needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise ModelError(f"variable {self.name!r} has duplicate level labels")
        if self.values is not None:
            vals = tuple(float(x) for x in self.values)
            if len(vals) != len(self.levels):
                raise ModelError(f"variable {self.name!r}: values/levels length mismatch")
            object.__setattr__(self, "values", vals)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level_index(self, label: str) -> int:
        try:
            return self.levels.index(label)
        except ValueError:
            raise UnknownLevel(f"{label!r} is not a level of variable {self.name!r}") from None


class LocalModel:
    """Exponential-family model for one tying class.

    kind "saturated": reference-cell indicators, dimension = n_levels - 1.
    kind "affine": saturated canonical parameters constrained to eta = T theta
    for a full-column-rank design T of shape (n_levels - 1, dim).
    The carrier b defaults to 1 on every level and must stay positive.
    """

    __slots__ = ("kind", "n_levels", "design", "carrier", "stats", "log_carrier")

    def __init__(self, kind: str, n_levels: int, design: np.ndarray | None = None,
                 carrier=None):
        if kind not in ("saturated", "affine"):
            raise InvalidLocalModel(f"unknown local model kind {kind!r}")
        if n_levels < 2:
            raise InvalidLocalModel("local model needs at least 2 levels")
        self.kind = kind
        self.n_levels = int(n_levels)

        if kind == "saturated":
            if design is not None:
                raise InvalidLocalModel("saturated model takes no design matrix")
            design = np.eye(n_levels - 1)
        else:
            design = np.asarray(design, dtype=float)
            if design.ndim != 2 or design.shape[0] != n_levels - 1:
                raise InvalidLocalModel(
                    f"design must have shape ({n_levels - 1}, d), got {design.shape}")
            d = design.shape[1]
            if d < 1 or d > n_levels - 1:
                raise InvalidLocalModel(f"design dimension d={d} outside 1..{n_levels - 1}")
            if not np.all(np.isfinite(design)):
                raise InvalidLocalModel("design has non-finite entries")
            if np.linalg.matrix_rank(design) != d:
                raise InvalidLocalModel("design does not have full column rank")
        self.design = _readonly(design)

        if carrier is None:
            carrier = np.ones(n_levels)
        else:
            carrier = np.asarray(carrier, dtype=float)
            if carrier.shape != (n_levels,):
                raise InvalidLocalModel(f"carrier must have shape ({n_levels},)")
            if not np.all(np.isfinite(carrier)) or np.any(carrier <= 0.0):
                raise InvalidLocalModel("carrier weights must be finite and positive")
        self.carrier = _readonly(carrier)
        self.log_carrier = _readonly(np.log(self.carrier))

        # t(i) as rows: reference level gets the zero vector.
        stats = np.vstack([np.zeros((1, self.design.shape[1])), self.design])
        self.stats = _readonly(stats)

    @classmethod
    def saturated(cls, n_levels: int, carrier=None) -> "LocalModel":
        return cls("saturated", n_levels, carrier=carrier)

    @classmethod
    def affine(cls, n_levels: int, design, carrier=None) -> "LocalModel":
        return cls("affine", n_levels, design=design, carrier=carrier)

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    def __repr__(self):
        return f"LocalModel({self.kind}, levels={self.n_levels}, dim={self.dim})"


def linear_design_from_values(values: Sequence[float]) -> np.ndarray:
    """One-column design with entries value(i) - value(0), i = 1..R.

    With levels carrying numeric values this constrains the table to a
    log-linear trend in the level value, the standard order-1 sub-model.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size < 2:
        raise InvalidLocalModel("need at least two level values")
    return (vals[1:] - vals[0]).reshape(-1, 1)


def _as_theta(model: LocalModel, theta) -> np.ndarray:
    arr = np.asarray(theta, dtype=float).reshape(-1)
    if arr.shape != (model.dim,):
        raise DimensionMismatch(
            f"theta has dimension {arr.shape[0]}, local model expects {model.dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("theta has non-finite entries")
    return arr


def log_partition(model: LocalModel, theta) -> float:
    """phi(theta) = log sum_i b(i) exp(theta' t(i)), computed with max-shift."""
    theta = _as_theta(model, theta)
    z = model.stats @ theta + model.log_carrier
    m = float(z.max())
    return m + float(np.log(np.exp(z - m).sum()))


def local_distribution(model: LocalModel, theta) -> np.ndarray:
    """Probability vector p(i | theta) over the child levels."""
    theta = _as_theta(model, theta)
    z = model.stats @ theta + model.log_carrier
    z -= z.max()
    w = np.exp(z)
    p = w / w.sum()
    if not np.all(np.isfinite(p)):
        raise NonFinite("local distribution overflowed")
    return p


def stat_mean(model: LocalModel, theta) -> np.ndarray:
    """tau(theta) = E[t] = sum_i p(i|theta) t(i), the gradient of phi."""
    p = local_distribution(model, theta)
    return p @ model.stats


def stat_cov(model: LocalModel, theta) -> np.ndarray:
    """nu(theta) = Cov[t], the Hessian of phi; symmetric PSD."""
    p = local_distribution(model, theta)
    tau = p @ model.stats
    centered = model.stats - tau
    return centered.T @ (p[:, None] * centered)


def theta_from_probs(probs) -> np.ndarray:
    """Reference-cell logits log(p^r / p^0), r = 1..R, for a unit carrier.

    Inverse of `probs_from_theta` for saturated models with b = 1.
    """
    p = np.asarray(probs, dtype=float).reshape(-1)
    if p.size < 2:
        raise DimensionMismatch("need at least 2 probabilities")
    if np.any(p <= 0.0):
        raise ZeroProbability("saturated logits are undefined at zero probabilities")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return np.log(p[1:] / p[0])


def probs_from_theta(theta) -> np.ndarray:
    """Distribution of a unit-carrier saturated model at the given logits."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    return local_distribution(LocalModel.saturated(theta.size + 1), theta)


def saturated_theta_for(model: LocalModel, probs) -> np.ndarray:
    """theta realizing the given distribution exactly in a saturated model.

    Accounts for a non-unit carrier: theta^r = log(p^r/p^0) - log(b^r/b^0).
    """
    if model.kind != "saturated":
        raise InvalidLocalModel("exact inversion needs a saturated model")
    p = np.asarray(probs, dtype=float).reshape(-1)
    if p.shape != (model.n_levels,):
        raise DimensionMismatch(f"expected {model.n_levels} probabilities, got {p.shape}")
    theta = theta_from_probs(p)
    return theta - (model.log_carrier[1:] - model.log_carrier[0])


@dataclass(frozen=True)
class TyingClass:
    """Variables constrained to share one generic conditional table."""

    id: str
    members: tuple[str, ...]

    @property
    def representative(self) -> str:
        return self.members[0]


class Network:
    """Validated DAG with tying classes and per-class local models.

    Use `build_network` to construct one.  Parent order is the declared
    order in `parents`; parent configurations enumerate row-major in that
    order.  Generic tables are indexed positionally, with the class
    representative's parent level labels naming the configurations.
    """

    def __init__(self, variables: tuple[Variable, ...], parents: dict[str, tuple[str, ...]],
                 tying: tuple[TyingClass, ...], local_models: dict[str, LocalModel]):
        self.variables = variables
        self.parents = parents
        self.tying = tying
        self.local_models = local_models
        self._index = {v.name: i for i, v in enumerate(variables)}
        self._by_name = {v.name: v for v in variables}
        self._class_of = {m: c.id for c in tying for m in c.members}
        self._class_by_id = {c.id: c for c in tying}
        keys = []
        for c in tying:
            shape = self.parent_shape(c.id)
            for cfg in np.ndindex(*shape) if shape else [()]:
                keys.append((c.id, tuple(int(i) for i in cfg)))
        self._block_keys = tuple(keys)
        self._block_order = {k: i for i, k in enumerate(keys)}

    # -- lookups -------------------------------------------------------

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> Variable:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownVariable(f"unknown variable {name!r}") from None

    def index_of(self, name: str) -> int:
        self.variable(name)
        return self._index[name]

    def parents_of(self, name: str) -> tuple[str, ...]:
        self.variable(name)
        return self.parents[name]

    def family_of(self, name: str) -> tuple[str, ...]:
        """fa(v) = {v} plus parents, sorted by declared variable order."""
        fam = set(self.parents_of(name)) | {name}
        return tuple(sorted(fam, key=self._index.__getitem__))

    def class_of(self, name: str) -> TyingClass:
        self.variable(name)
        return self._class_by_id[self._class_of[name]]

    def tying_class(self, class_id: str) -> TyingClass:
        try:
            return self._class_by_id[class_id]
        except KeyError:
            raise UnknownVariable(f"unknown tying class {class_id!r}") from None

    def local_model(self, class_id: str) -> LocalModel:
        self.tying_class(class_id)
        return self.local_models[class_id]

    # -- parameter block layout ----------------------------------------

    def parent_shape(self, class_id: str) -> tuple[int, ...]:
        rep = self.tying_class(class_id).representative
        return tuple(self.variable(p).n_levels for p in self.parents[rep])

    def block_keys(self) -> tuple[BlockKey, ...]:
        return self._block_keys

    def block_order(self, key: BlockKey) -> int:
        try:
            return self._block_order[key]
        except KeyError:
            raise UnknownVariable(f"no parameter block {key!r}") from None

    def block_dim(self, class_id: str) -> int:
        return self.local_model(class_id).dim

    @property
    def total_dim(self) -> int:
        return sum(self.local_model(c).dim for c, _ in self._block_keys)

    @property
    def n_configurations(self) -> int:
        n = 1
        for v in self.variables:
            n *= v.n_levels
        return n

    # -- block key <-> string ------------------------------------------

    def config_labels(self, key: BlockKey) -> tuple[str, ...]:
        class_id, cfg = key
        rep = self.tying_class(class_id).representative
        return tuple(self.variable(p).levels[i] for p, i in zip(self.parents[rep], cfg))

    def config_indices(self, class_id: str, labels: Sequence[str]) -> tuple[int, ...]:
        rep = self.tying_class(class_id).representative
        pars = self.parents[rep]
        if len(labels) != len(pars):
            raise DimensionMismatch(
                f"class {class_id!r} has {len(pars)} parents, got {len(labels)} labels")
        return tuple(self.variable(p).level_index(lab) for p, lab in zip(pars, labels))

    def block_key_str(self, key: BlockKey) -> str:
        class_id, cfg = key
        if not cfg:
            return f"{class_id}|{NO_PARENTS_KEY}"
        return class_id + "|" + "|".join(self.config_labels(key))

    def parse_block_key(self, text: str) -> BlockKey:
        parts = text.split("|")
        class_id = parts[0]
        rest = parts[1:]
        if rest == [NO_PARENTS_KEY]:
            rest = []
        return (class_id, self.config_indices(class_id, rest))

    def parent_config_strings(self, class_id: str) -> list[str]:
        out = []
        shape = self.parent_shape(class_id)
        for cfg in (np.ndindex(*shape) if shape else [()]):
            key = (class_id, tuple(int(i) for i in cfg))
            s = self.block_key_str(key)
            out.append(s.split("|", 1)[1])
        return out

    # -- configurations -------------------------------------------------

    def config_to_indices(self, x) -> tuple[int, ...]:
        """Map a complete configuration (mapping or sequence of labels) to
        level indices in declared variable order."""
        if isinstance(x, Mapping):
            missing = [v.name for v in self.variables if v.name not in x]
            if missing:
                raise UnknownVariable(f"configuration missing variables {missing}")
            extra = [k for k in x if k not in self._by_name]
            if extra:
                raise UnknownVariable(f"configuration names unknown variables {extra}")
            return tuple(v.level_index(x[v.name]) for v in self.variables)
        labels = tuple(x)
        if len(labels) != len(self.variables):
            raise DimensionMismatch(
                f"configuration has {len(labels)} entries, expected {len(self.variables)}")
        return tuple(v.level_index(lab) for v, lab in zip(self.variables, labels))

    def block_key_for(self, var_name: str, parent_indices: tuple[int, ...]) -> BlockKey:
        """Block addressed by a member variable and its own parents' indices.

        Positional index identity is what ties members together, so the
        member's parent indices are the generic table's indices directly.
        """
        return (self._class_of[var_name], parent_indices)


def build_network(variables, parent_map, tying_partition=None, local_models=None) -> Network:
    """Validate and assemble a Network.

    variables: iterable of Variable (declaration order is significant).
    parent_map: variable name -> ordered parent names (missing = no parents).
    tying_partition: iterable of groups of variable names; unlisted
        variables form singleton classes.  A class is identified by its
        first member in declaration order.
    local_models: class id -> LocalModel; defaults to saturated with unit
        carrier.
    """
    variables = tuple(variables)
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ModelError("duplicate variable names")
    name_set = set(names)
    order = {n: i for i, n in enumerate(names)}

    parent_map = dict(parent_map or {})
    for child, pars in parent_map.items():
        if child not in name_set:
            raise UnknownVariable(f"parent map references unknown variable {child!r}")
        for p in pars:
            if p not in name_set:
                raise UnknownVariable(f"unknown parent {p!r} of {child!r}")
        if len(set(pars)) != len(tuple(pars)):
            raise ModelError(f"variable {child!r} lists a parent twice")
        if child in pars:
            raise CycleDetected(f"variable {child!r} is its own parent")
    parents = {n: tuple(parent_map.get(n, ())) for n in names}

    _check_acyclic(names, parents)

    # Assemble tying classes; unlisted variables become singletons.
    seen: set[str] = set()
    groups: list[tuple[str, ...]] = []
    for group in tying_partition or []:
        members = tuple(group)
        if not members:
            raise ModelError("empty tying group")
        for m in members:
            if m not in name_set:
                raise UnknownVariable(f"tying group references unknown variable {m!r}")
            if m in seen:
                raise ModelError(f"variable {m!r} appears in more than one tying group")
            seen.add(m)
        groups.append(tuple(sorted(members, key=order.__getitem__)))
    for n in names:
        if n not in seen:
            groups.append((n,))
    groups.sort(key=lambda g: order[g[0]])
    tying = tuple(TyingClass(id=g[0], members=g) for g in groups)

    by_name = {v.name: v for v in variables}
    for c in tying:
        rep = by_name[c.representative]
        rep_pshape = tuple(by_name[p].n_levels for p in parents[rep.name])
        for m in c.members[1:]:
            mv = by_name[m]
            if mv.n_levels != rep.n_levels:
                raise TyingShapeMismatch(
                    f"tying class {c.id!r}: {m!r} has {mv.n_levels} levels, "
                    f"{rep.name!r} has {rep.n_levels}")
            pshape = tuple(by_name[p].n_levels for p in parents[m])
            if pshape != rep_pshape:
                raise TyingShapeMismatch(
                    f"tying class {c.id!r}: parent shape {pshape} of {m!r} does not "
                    f"match {rep_pshape} of {rep.name!r}")

    models: dict[str, LocalModel] = {}
    local_models = dict(local_models or {})
    valid_ids = {c.id for c in tying}
    for cid in local_models:
        if cid not in valid_ids:
            raise UnknownVariable(
                f"local model for unknown tying class {cid!r} "
                f"(class ids are first members in declaration order: {sorted(valid_ids)})")
    for c in tying:
        model = local_models.get(c.id)
        n_levels = by_name[c.representative].n_levels
        if model is None:
            model = LocalModel.saturated(n_levels)
        elif model.n_levels != n_levels:
            raise InvalidLocalModel(
                f"local model for class {c.id!r} has {model.n_levels} levels, "
                f"members have {n_levels}")
        models[c.id] = model

    return Network(variables, parents, tying, models)


def _check_acyclic(names, parents):
    children: dict[str, list[str]] = {n: [] for n in names}
    indeg = {n: len(parents[n]) for n in names}
    for n in names:
        for p in parents[n]:
            children[p].append(n)
    queue = [n for n in names if indeg[n] == 0]
    topo = []
    while queue:
        n = queue.pop(0)
        topo.append(n)
        for ch in children[n]:
            indeg[ch] -= 1
            if indeg[ch] == 0:
                queue.append(ch)
    if len(topo) < len(names):
        stuck = [n for n in names if indeg[n] > 0]
        cycle = _find_cycle(stuck, parents)
        raise CycleDetected("cycle detected: " + " -> ".join(cycle))


def _find_cycle(stuck, parents):
    node = stuck[0]
    seen = {}
    path = []
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = next(p for p in parents[node] if p in stuck)
    cyc = path[seen[node]:] + [node]
    return cyc[::-1]


class ParameterSet:
    """One parameter vector per (tying class, parent configuration) block.

    Immutable; `replace` returns a modified copy.  The canonical vector
    layout concatenates blocks in `network.block_keys()` order.
    """

    __slots__ = ("network", "_blocks")

    def __init__(self, network: Network, blocks: Mapping[BlockKey, np.ndarray]):
        self.network = network
        store: dict[BlockKey, np.ndarray] = {}
        for key in network.block_keys():
            if key not in blocks:
                raise DimensionMismatch(
                    f"missing parameter block {network.block_key_str(key)!r}")
            arr = np.array(blocks[key], dtype=float).reshape(-1)
            d = network.block_dim(key[0])
            if arr.shape != (d,):
                raise DimensionMismatch(
                    f"block {network.block_key_str(key)!r} has dimension {arr.shape[0]}, "
                    f"expected {d}")
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"block {network.block_key_str(key)!r} has non-finite entries")
            store[key] = _readonly(arr)
        extra = set(blocks) - set(store)
        if extra:
            raise DimensionMismatch(f"unknown parameter blocks {sorted(extra)}")
        self._blocks = store

    @classmethod
    def zeros(cls, network: Network) -> "ParameterSet":
        return cls(network, {k: np.zeros(network.block_dim(k[0])) for k in network.block_keys()})

    @classmethod
    def from_vector(cls, network: Network, vec) -> "ParameterSet":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.shape != (network.total_dim,):
            raise DimensionMismatch(
                f"vector has dimension {vec.shape[0]}, expected {network.total_dim}")
        blocks = {}
        pos = 0
        for key in network.block_keys():
            d = network.block_dim(key[0])
            blocks[key] = vec[pos:pos + d]
            pos += d
        return cls(network, blocks)

    @classmethod
    def from_conditional_tables(cls, network: Network, tables: Mapping) -> "ParameterSet":
        """Build saturated-block parameters from probability tables.

        tables: class id -> {parent config labels tuple (or () ) -> probs}.
        Only valid for classes whose local model is saturated.
        """
        blocks = {}
        for key in network.block_keys():
            class_id, cfg = key
            model = network.local_model(class_id)
            labels = network.config_labels(key)
            per_class = tables[class_id]
            probs = per_class[labels] if labels in per_class else per_class[()]
            blocks[key] = saturated_theta_for(model, probs)
        return cls(network, blocks)

    def block(self, class_id: str, config) -> np.ndarray:
        """Block vector; `config` is a tuple of level indices or labels."""
        key = self._resolve(class_id, config)
        return self._blocks[key]

    def _resolve(self, class_id: str, config) -> BlockKey:
        cfg = tuple(config)
        if cfg and isinstance(cfg[0], str):
            cfg = self.network.config_indices(class_id, cfg)
        key = (class_id, cfg)
        self.network.block_order(key)
        return key

    def get(self, key: BlockKey) -> np.ndarray:
        return self._blocks[key]

    def items(self) -> Iterator[tuple[BlockKey, np.ndarray]]:
        for key in self.network.block_keys():
            yield key, self._blocks[key]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self._blocks[k] for k in self.network.block_keys()])

    def replace(self, class_id: str, config, theta) -> "ParameterSet":
        key = self._resolve(class_id, config)
        blocks = dict(self._blocks)
        blocks[key] = np.asarray(theta, dtype=float)
        return ParameterSet(self.network, blocks)

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.network is other.network and all(
            np.array_equal(self._blocks[k], other._blocks[k]) for k in self._blocks)

    def __repr__(self):
        return f"ParameterSet(blocks={len(self._blocks)}, dim={self.network.total_dim})"


def joint_prob(network: Network, params: ParameterSet, x) -> float:
    """Probability of one complete configuration: the product of local
    probabilities, with tied members drawing from the same generic table."""
    idx = network.config_to_indices(x)
    prob = 1.0
    for pos, var in enumerate(network.variables):
        pidx = tuple(idx[network.index_of(p)] for p in network.parents_of(var.name))
        key = network.block_key_for(var.name, pidx)
        model = network.local_model(key[0])
        p = local_distribution(model, params.get(key))
        prob *= float(p[idx[pos]])
    return prob

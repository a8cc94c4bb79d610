"""Readers and writers for the JSON/CSV interchange formats.

See FORMATS.md at the repository root for the format reference.  All floats
serialize with 17 significant digits, which round-trips IEEE doubles
exactly and keeps golden-file comparisons byte-stable.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .inference import Observation, Sample
from .model import (
    LocalModel,
    Network,
    ParameterSet,
    Variable,
    build_network,
)
from .priors import (
    DirichletPrior,
    DirichletPriorBlock,
    Elicitation,
    ElicitationBlock,
    NormalPrior,
    NormalPriorBlock,
)

__all__ = [
    "dump_json",
    "dump_params",
    "dump_prior",
    "load_data",
    "load_elicitation",
    "load_model",
    "load_params",
    "load_prior",
]


# ---------------------------------------------------------------------------
# JSON emission with fixed float formatting
# ---------------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise FileFormatError("cannot serialize non-finite number")
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def _emit(obj, out: list, indent: int):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f'{pad}  {json.dumps(str(k))}: ')
            _emit(v, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[")
        for i, v in enumerate(items):
            _emit(v, out, indent)
            if i < len(items) - 1:
                out.append(", ")
        out.append("]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise FileFormatError(f"cannot serialize {type(obj).__name__}")


def dump_json(obj) -> str:
    """Serialize to JSON text with deterministic key order and floats at 17
    significant digits."""
    out: list[str] = []
    _emit(obj, out, 0)
    out.append("\n")
    return "".join(out)


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: top level must be a JSON object")
    return doc


def _require(doc: dict, field: str, where: str):
    if field not in doc:
        raise FileFormatError(f"{where}: missing field {field!r}")
    return doc[field]


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def load_model(path) -> Network:
    """Parse a model file into a validated Network.

    Parent order of a variable is the order its incoming edges appear in
    "edges"; that order also fixes parent-configuration keys.
    """
    doc = _read_json(path)
    where = str(path)

    raw_vars = _require(doc, "variables", where)
    if not isinstance(raw_vars, list) or not raw_vars:
        raise FileFormatError(f"{where}: 'variables' must be a non-empty list")
    variables = []
    for i, rv in enumerate(raw_vars):
        if not isinstance(rv, dict):
            raise FileFormatError(f"{where}: variables[{i}] must be an object")
        name = _require(rv, "name", f"{where}: variables[{i}]")
        levels = _require(rv, "levels", f"{where}: variables[{i}]")
        values = rv.get("values")
        variables.append(Variable(name=name, levels=tuple(levels),
                                  values=None if values is None else tuple(values)))

    parent_map: dict[str, list[str]] = {}
    for i, edge in enumerate(doc.get("edges", [])):
        if not (isinstance(edge, list) and len(edge) == 2):
            raise FileFormatError(f"{where}: edges[{i}] must be [parent, child]")
        parent, child = edge
        parent_map.setdefault(child, []).append(parent)

    tying = doc.get("tying", [])

    local_models = {}
    for cid, spec in (doc.get("local_models") or {}).items():
        if not isinstance(spec, dict):
            raise FileFormatError(f"{where}: local_models[{cid!r}] must be an object")
        kind = spec.get("kind", "saturated")
        carrier = spec.get("carrier")
        n_levels = _levels_for_class(variables, tying, cid)
        if kind == "saturated":
            local_models[cid] = LocalModel.saturated(n_levels, carrier=carrier)
        elif kind == "affine":
            design = _require(spec, "design", f"{where}: local_models[{cid!r}]")
            local_models[cid] = LocalModel.affine(n_levels, np.asarray(design, dtype=float),
                                                  carrier=carrier)
        else:
            raise FileFormatError(f"{where}: local_models[{cid!r}]: unknown kind {kind!r}")

    return build_network(variables, parent_map, tying, local_models)


def _levels_for_class(variables, tying, cid) -> int:
    # A class id is the name of its first member, so the level count can be
    # read off the variable itself; build_network re-validates membership.
    by_name = {v.name: v for v in variables}
    if cid in by_name:
        return by_name[cid].n_levels
    raise FileFormatError(f"local model for unknown class {cid!r}")


# ---------------------------------------------------------------------------
# Parameter files
# ---------------------------------------------------------------------------


def load_params(network: Network, path) -> ParameterSet:
    doc = _read_json(path)
    blocks = {}
    for cid, per_cfg in doc.items():
        if not isinstance(per_cfg, dict):
            raise FileFormatError(f"{path}: {cid!r} must map config keys to vectors")
        for cfg_key, theta in per_cfg.items():
            key = network.parse_block_key(f"{cid}|{cfg_key}")
            blocks[key] = np.asarray(theta, dtype=float)
    return ParameterSet(network, blocks)


def dump_params(network: Network, params: ParameterSet) -> str:
    doc: dict = {}
    for key, theta in params.items():
        cid = key[0]
        cfg_key = network.block_key_str(key).split("|", 1)[1]
        doc.setdefault(cid, {})[cfg_key] = list(theta)
    return dump_json(doc)


# ---------------------------------------------------------------------------
# Data files (CSV and JSON lines)
# ---------------------------------------------------------------------------


def load_data(network: Network, path) -> Sample:
    """Load observations from .csv (header of variable names; cells are a
    level label, "?" for missing, or "{a;b;c}" for an imprecise set) or
    from JSON lines (one object per row; values are label strings or lists
    of labels; null or absent means missing)."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".jsonl", ".ndjson")):
        return _parse_jsonl(network, text, str(path))
    if str(path).endswith(".csv"):
        return _parse_csv(network, text, str(path))
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _parse_jsonl(network, text, str(path))
    return _parse_csv(network, text, str(path))


def _parse_cell(cell: str, where: str):
    cell = cell.strip()
    if not cell:
        raise FileFormatError(f"{where}: empty cell (use '?' for missing)")
    if cell == "?":
        return None
    if cell.startswith("{"):
        if not cell.endswith("}"):
            raise FileFormatError(f"{where}: unterminated imprecise set {cell!r}")
        labels = [part.strip() for part in cell[1:-1].split(";")]
        if any(not lab for lab in labels):
            raise FileFormatError(f"{where}: malformed imprecise set {cell!r}")
        return labels
    return cell


def _parse_csv(network: Network, text: str, where: str) -> Sample:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(c.strip() for c in row)]
    if not rows:
        raise FileFormatError(f"{where}: no header row")
    header = [h.strip() for h in rows[0]]
    missing = set(network.var_names) - set(header)
    if missing:
        raise FileFormatError(f"{where}: header missing variables {sorted(missing)}")
    unknown = set(header) - set(network.var_names)
    if unknown:
        raise FileFormatError(f"{where}: header names unknown variables {sorted(unknown)}")
    observations = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FileFormatError(f"{where}: line {r}: expected {len(header)} cells")
        values = {}
        for name, cell in zip(header, row):
            parsed = _parse_cell(cell, f"{where}: line {r}, column {name!r}")
            if parsed is not None:
                values[name] = parsed
        observations.append(Observation.from_mapping(network, values))
    return Sample(observations)


def _parse_jsonl(network: Network, text: str, where: str) -> Sample:
    observations = []
    for r, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{where}: line {r}: invalid JSON ({exc})") from None
        if not isinstance(row, dict):
            raise FileFormatError(f"{where}: line {r}: each row must be an object")
        values = {k: v for k, v in row.items() if v is not None}
        observations.append(Observation.from_mapping(network, values))
    return Sample(observations)


# ---------------------------------------------------------------------------
# Elicitation files
# ---------------------------------------------------------------------------


def load_elicitation(network: Network, path) -> Elicitation:
    doc = _read_json(path)
    blocks = {}
    for cid, per_cfg in doc.items():
        if not isinstance(per_cfg, dict):
            raise FileFormatError(f"{path}: {cid!r} must map config keys to objects")
        for cfg_key, spec in per_cfg.items():
            key = network.parse_block_key(f"{cid}|{cfg_key}")
            guess = _require(spec, "best_guess", f"{path}: {cid}|{cfg_key}")
            intervals = _require(spec, "intervals", f"{path}: {cid}|{cfg_key}")
            ivs = tuple(None if iv is None else (float(iv[0]), float(iv[1]))
                        for iv in intervals)
            blocks[key] = ElicitationBlock(best_guess=np.asarray(guess, dtype=float),
                                           intervals=ivs)
    return Elicitation(blocks)


# ---------------------------------------------------------------------------
# Prior files
# ---------------------------------------------------------------------------


def load_prior(network: Network, path):
    doc = _read_json(path)
    kind = _require(doc, "type", str(path))
    raw_blocks = _require(doc, "blocks", str(path))
    if kind == "normal":
        blocks = {}
        for cid, per_cfg in raw_blocks.items():
            for cfg_key, spec in per_cfg.items():
                key = network.parse_block_key(f"{cid}|{cfg_key}")
                blocks[key] = NormalPriorBlock(
                    theta_star=np.asarray(spec["theta_star"], dtype=float),
                    beta=float(spec["beta"]),
                    nu_star=np.asarray(spec["nu_star"], dtype=float))
        return NormalPrior(blocks)
    if kind == "dirichlet":
        blocks = {}
        for cid, per_cfg in raw_blocks.items():
            for cfg_key, spec in per_cfg.items():
                key = network.parse_block_key(f"{cid}|{cfg_key}")
                blocks[key] = DirichletPriorBlock(
                    alpha=np.asarray(spec["alpha"], dtype=float))
        return DirichletPrior(blocks)
    raise FileFormatError(f"{path}: unknown prior type {kind!r}")


def dump_prior(network: Network, prior, diagnostics=None) -> str:
    """Serialize a prior; optional per-block diagnostics are included under
    a "diagnostics" key that `load_prior` ignores."""
    diag_by_key = {}
    for d in diagnostics or []:
        entry = {"iterations": d.iterations, "kl": d.kl}
        if d.warnings:
            entry["warnings"] = list(d.warnings)
        diag_by_key[d.key] = entry

    raw_blocks: dict = {}
    for key in network.block_keys():
        block = prior.blocks.get(key)
        if block is None:
            continue
        cid = key[0]
        cfg_key = network.block_key_str(key).split("|", 1)[1]
        if prior.kind == "normal":
            spec = {
                "theta_star": list(block.theta_star),
                "beta": block.beta,
                "nu_star": [list(row) for row in block.nu_star],
            }
        else:
            spec = {"alpha": list(block.alpha)}
        if key in diag_by_key:
            spec["diagnostics"] = diag_by_key[key]
        raw_blocks.setdefault(cid, {})[cfg_key] = spec
    return dump_json({"type": prior.kind, "blocks": raw_blocks})

"""Staged model-file validation that collects failures instead of stopping
at the first one.  Per-item problems (variables, edges, tying groups, local
models) accumulate; structural problems that poison later stages (unparsable
JSON, unknown names) end their stage early.
"""

from __future__ import annotations

import json

from .errors import RexmodError
from .model import Variable, build_network

__all__ = ["collect_model_diagnostics"]


def _named(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def collect_model_diagnostics(path):
    """Return (network or None, list of problem strings)."""
    problems: list[str] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return None, [f"FileFormatError: {path}: {exc}"]
    if not isinstance(doc, dict):
        return None, [f"FileFormatError: {path}: top level must be a JSON object"]

    raw_vars = doc.get("variables")
    if not isinstance(raw_vars, list) or not raw_vars:
        return None, [f"FileFormatError: {path}: 'variables' must be a non-empty list"]

    variables = []
    names = set()
    for i, rv in enumerate(raw_vars):
        try:
            if not isinstance(rv, dict):
                raise RexmodError(f"variables[{i}] must be an object")
            var = Variable(name=rv.get("name"), levels=tuple(rv.get("levels") or ()),
                           values=None if rv.get("values") is None
                           else tuple(rv["values"]))
            if var.name in names:
                raise RexmodError(f"duplicate variable name {var.name!r}")
            names.add(var.name)
            variables.append(var)
        except Exception as exc:
            problems.append(_named(exc) if isinstance(exc, RexmodError)
                            else f"FileFormatError: variables[{i}]: {exc}")
    if problems:
        return None, problems

    parent_map: dict[str, list[str]] = {}
    for i, edge in enumerate(doc.get("edges", [])):
        if not (isinstance(edge, list) and len(edge) == 2):
            problems.append(f"FileFormatError: edges[{i}] must be [parent, child]")
            continue
        parent, child = edge
        for end in (parent, child):
            if end not in names:
                problems.append(f"UnknownVariable: edges[{i}] references {end!r}")
        parent_map.setdefault(child, []).append(parent)

    tying = doc.get("tying", [])
    for i, group in enumerate(tying):
        for m in group:
            if m not in names:
                problems.append(f"UnknownVariable: tying[{i}] references {m!r}")
    if problems:
        return None, problems

    # Independent structural checks so one failure does not mask another:
    # the DAG check with singleton tying, then each declared group on its own.
    dag_ok = True
    try:
        build_network(variables, parent_map, tying_partition=None)
    except RexmodError as exc:
        problems.append(_named(exc))
        dag_ok = False
    if dag_ok:
        for group in tying:
            try:
                build_network(variables, parent_map, tying_partition=[group])
            except RexmodError as exc:
                problems.append(_named(exc))
    if problems:
        return None, problems

    # Full load including local models.
    from .fileio import load_model
    try:
        return load_model(path), []
    except RexmodError as exc:
        return None, [_named(exc)]

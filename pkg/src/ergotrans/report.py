"""Deterministic report rendering.

Reports are JSON key-value trees with fixed key ordering (insertion
order) and every float printed with 17 significant digits, so repeated
runs on identical inputs are byte-identical.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["render_report"]


def _format_scalar(value):
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v != v:
            return '"nan"'
        if v in (float("inf"), float("-inf")):
            return '"inf"' if v > 0 else '"-inf"'
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if value is None:
        return "null"
    raise TypeError(f"cannot render {type(value)!r} in a report")


def _render(value, indent):
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        lines = ["{"]
        items = list(value.items())
        for i, (key, val) in enumerate(items):
            comma = "," if i + 1 < len(items) else ""
            lines.append(f"{inner}{json.dumps(str(key))}: {_render(val, indent + 1)}{comma}")
        lines.append(pad + "}")
        return "\n".join(lines)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        seq = list(value)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq) and len(seq) <= 8:
            return "[" + ", ".join(_format_scalar(v) for v in seq) + "]"
        lines = ["["]
        for i, val in enumerate(seq):
            comma = "," if i + 1 < len(seq) else ""
            lines.append(f"{inner}{_render(val, indent + 1)}{comma}")
        lines.append(pad + "]")
        return "\n".join(lines)
    return _format_scalar(value)


def render_report(report):
    """Serialize a report tree to deterministic JSON text."""
    return _render(report, 0) + "\n"

"""JSON and CSV serialisation of paths, solve results, polygons and curves.

CSV numbers use 17 significant digits, which round-trips IEEE doubles.
JSON floats use Python's shortest round-trip repr; NaN is written as null.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .analysis import SampledCurve
from .discrete import DiscretePath, Grid, discrete_action, discrete_gradient

SCHEMA_VERSION = 1


def fmt(v):
    return format(float(v), ".17g")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj):
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    Path(path).write_text(dumps(obj))


def solve_result_to_dict(problem, result):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": problem.kind,
        "t": problem.t,
        "K": result.path.K,
        "h": result.path.grid.h,
        "action": result.action,
        "grad_norm": result.grad_norm,
        "iterations": result.iterations,
        "converged": result.converged,
        "tol_grad": result.tol_grad,
        "certificate": None if result.certificate is None else result.certificate.to_dict(),
        "nodes": result.path.nodes,
        "momenta": result.momenta.z,
        "diagnostics": result.diagnostics,
    }


def path_from_dict(data):
    grid = Grid(float(data["t"]), int(data["K"]))
    return DiscretePath(grid, np.asarray(data["nodes"], dtype=float))


def revalidate(problem, data):
    """Recompute ``(action, grad_norm)`` from a stored solve result."""
    path = path_from_dict(data)
    action = discrete_action(problem, path)
    g = discrete_gradient(problem, path)
    return action, float(np.max(np.abs(g), initial=0.0))


def path_csv(path, momenta):
    """CSV text with columns ``k, t_k, y0.., z0..``; row ``K`` repeats ``z_{K-1}``."""
    d = path.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "t_k"] + [f"y{i}" for i in range(d)] + [f"z{i}" for i in range(d)])
    z = np.vstack([momenta.z, momenta.z[-1:]])
    for k, (tk, y, zk) in enumerate(zip(path.grid.nodes, path.nodes, z)):
        w.writerow([k, fmt(tk)] + [fmt(v) for v in y] + [fmt(v) for v in zk])
    return buf.getvalue()


def polygon_csv(poly):
    """CSV text with columns ``s, y0.., z0..`` at the polygon nodes."""
    d = poly.y.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s"] + [f"y{i}" for i in range(d)] + [f"z{i}" for i in range(d)])
    for s, y, z in zip(poly.tk, poly.y, poly.z):
        w.writerow([fmt(s)] + [fmt(v) for v in y] + [fmt(v) for v in z])
    return buf.getvalue()


def curve_csv(curve):
    """CSV text with columns ``s, y0..`` and ``dy0..`` when derivatives are present."""
    d = curve.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["s"] + [f"y{i}" for i in range(d)]
    if curve.derivs is not None:
        head += [f"dy{i}" for i in range(d)]
    w.writerow(head)
    for i, s in enumerate(curve.s):
        row = [fmt(s)] + [fmt(v) for v in curve.values[i]]
        if curve.derivs is not None:
            row += [fmt(v) for v in curve.derivs[i]]
        w.writerow(row)
    return buf.getvalue()


def read_curve_csv(path):
    """Parse a curve CSV written by :func:`curve_csv`.

    Raises
    ------
    ValueError
        On a missing header, unknown columns, ragged rows or non-numeric cells.
    """
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if len(rows) < 3:
        raise ValueError("curve file needs a header and at least two samples")
    head = [h.strip() for h in rows[0]]
    if not head or head[0] != "s":
        raise ValueError("first column of a curve file must be 's'")
    ycols = [i for i, h in enumerate(head) if h.startswith("y")]
    dcols = [i for i, h in enumerate(head) if h.startswith("dy")]
    if not ycols or len(ycols) + len(dcols) + 1 != len(head) or (dcols and len(dcols) != len(ycols)):
        raise ValueError(f"unexpected curve columns {head}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"non-numeric cell in curve file: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(head):
        raise ValueError("ragged rows in curve file")
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite value in curve file")
    derivs = data[:, dcols] if dcols else None
    return SampledCurve(data[:, 0], data[:, ycols], derivs)

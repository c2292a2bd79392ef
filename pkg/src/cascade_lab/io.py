"""Reading and writing networks, node files, traces, grids and clearing results.

Text inputs are whitespace-delimited with ``#`` comments.  All JSON output
is written with sorted keys and a ``schema_version`` field so that identical
runs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .network import CascadeTrace, Network, NetworkError, NodeState, build_network

SCHEMA_VERSION = 1


class InputError(ValueError):
    """Malformed input file; the message names the file and line."""


def _content_lines(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def read_edge_list(path) -> Network:
    """Parse ``n <count> directed|undirected`` followed by ``i j weight`` lines."""
    lines = _content_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise InputError(f"{path}: empty edge list, expected a header line") from None
    if len(header) != 3 or header[0] != "n" or header[2] not in ("directed", "undirected"):
        raise InputError(f"{path}:{lineno}: header must read 'n <count> directed|undirected'")
    try:
        n = int(header[1])
    except ValueError:
        raise InputError(f"{path}:{lineno}: node count {header[1]!r} is not an integer") from None

    edges = []
    for lineno, fields in lines:
        if len(fields) not in (2, 3):
            raise InputError(f"{path}:{lineno}: expected 'i j weight', got {len(fields)} fields")
        try:
            i, j = int(fields[0]), int(fields[1])
            w = float(fields[2]) if len(fields) == 3 else 1.0
        except ValueError:
            raise InputError(f"{path}:{lineno}: cannot parse {' '.join(fields)!r}") from None
        edges.append((lineno, i, j, w))

    undirected = header[2] == "undirected"
    seen = {}
    for lineno, i, j, w in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise InputError(f"{path}:{lineno}: node index out of range [0, {n})")
        if not w > 0:
            raise InputError(f"{path}:{lineno}: weight must be positive, got {w}")
        key = (min(i, j), max(i, j)) if undirected else (i, j)
        if key in seen:
            raise InputError(f"{path}:{lineno}: duplicate of the edge on line {seen[key]}")
        seen[key] = lineno
    try:
        return build_network([e[1:] for e in edges], n, undirected=undirected)
    except NetworkError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_edge_list(network: Network, path) -> None:
    lines = [f"n {network.n} {'directed' if network.directed else 'undirected'}"]
    for i, j, w in network.edges():
        if not network.directed and i > j:
            continue
        lines.append(f"{i} {j} {w!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_node_file(path, n: Optional[int] = None):
    """Parse ``i phi0 theta [theta_prime]`` lines.

    Returns ``(phi0, theta, theta_prime)``; ``theta_prime`` is None unless
    every line carries it.  Every node index must appear exactly once.
    """
    rows = {}
    for lineno, fields in _content_lines(path):
        if len(fields) not in (3, 4):
            raise InputError(f"{path}:{lineno}: expected 'i phi0 theta [theta_prime]'")
        try:
            i = int(fields[0])
            values = [float(v) for v in fields[1:]]
        except ValueError:
            raise InputError(f"{path}:{lineno}: cannot parse {' '.join(fields)!r}") from None
        if i in rows:
            raise InputError(f"{path}:{lineno}: node {i} listed twice")
        rows[i] = (lineno, values)
    size = len(rows) if n is None else n
    if sorted(rows) != list(range(size)):
        missing = sorted(set(range(size)) - set(rows))
        extra = sorted(set(rows) - set(range(size)))
        raise InputError(f"{path}: node indices must cover 0..{size - 1}; "
                         f"missing {missing}, out of range {extra}")
    widths = {len(v) for _, v in rows.values()}
    if len(widths) > 1:
        raise InputError(f"{path}: theta_prime must be given for all nodes or none")
    phi0 = np.array([rows[i][1][0] for i in range(size)])
    theta = np.array([rows[i][1][1] for i in range(size)])
    theta_prime = np.array([rows[i][1][2] for i in range(size)]) if widths == {3} else None
    return phi0, theta, theta_prime


# -- traces -------------------------------------------------------------------

def trace_to_dict(trace: CascadeTrace, kind: str = "cascade", model: Optional[str] = None) -> dict:
    if not trace.states:
        raise ValueError("cannot serialise an empty trace")
    steps = []
    for t, (state, x) in enumerate(zip(trace.states, trace.x_series)):
        steps.append({
            "t": t,
            "s": state.s.astype(int).tolist(),
            "phi": state.phi.tolist(),
            "theta": state.theta.tolist(),
            "z": state.z.tolist(),
            "X": float(x),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "model": model,
        "terminated_at": trace.terminated_at,
        "converged": trace.converged,
        "steps": steps,
    }


def dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


def emit_trace(trace: CascadeTrace, path, kind: str = "cascade", model: Optional[str] = None) -> None:
    Path(path).write_text(dumps(trace_to_dict(trace, kind, model)))


def trace_from_dict(data: dict) -> CascadeTrace:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"unsupported trace schema {data.get('schema_version')!r}")
    states = [NodeState(step["s"], step["phi"], step["theta"]) for step in data["steps"]]
    xs = [float(step["X"]) for step in data["steps"]]
    return CascadeTrace(states, xs, terminated_at=int(data["terminated_at"]),
                        converged=bool(data.get("converged", True)))


def load_trace(path) -> CascadeTrace:
    return trace_from_dict(json.loads(Path(path).read_text()))


# -- grids and series -----------------------------------------------------------

def phase_csv(grid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mu", "sigma", "x0", "x_star"])
    for mu, sigma, x0, x_star in grid.rows():
        writer.writerow([repr(float(mu)), repr(float(sigma)), repr(float(x0)), repr(float(x_star))])
    return buf.getvalue()


def read_phase_csv(path) -> np.ndarray:
    """Rows of ``(mu, sigma, x0, x_star)`` as a float array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["mu", "sigma", "x0", "x_star"]:
            raise InputError(f"{path}: unexpected header {header}")
        return np.array([[float(v) for v in row] for row in reader]).reshape(-1, 4)


def series_csv(columns: dict) -> str:
    """CSV with a ``t`` column followed by the given equal-length series."""
    names = list(columns)
    length = len(next(iter(columns.values()))) if columns else 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + names)
    for t in range(length):
        writer.writerow([t] + [repr(float(columns[name][t])) for name in names])
    return buf.getvalue()

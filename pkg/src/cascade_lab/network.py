"""Networks, node states and the synchronous cascade engine."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np


class NetworkError(ValueError):
    pass


class CascadeDidNotTerminate(RuntimeError):
    """Raised when a deterministic run hits ``max_steps`` before a fixed point."""

    def __init__(self, trace: "CascadeTrace"):
        super().__init__(
            f"no fixed point after {trace.terminated_at} steps "
            f"(X={trace.x_series[-1]:.6g})"
        )
        self.trace = trace


@dataclass(frozen=True, eq=False)
class Network:
    """Static directed weighted graph.

    ``adjacency[i, j] > 0`` means a link i -> j, so j is an out-neighbour
    of i and i an in-neighbour of j.
    """

    adjacency: np.ndarray
    in_neighbors: tuple[tuple[int, ...], ...] = field(repr=False)
    out_neighbors: tuple[tuple[int, ...], ...] = field(repr=False)
    directed: bool = True

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def in_degree(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.in_neighbors], dtype=int)

    @property
    def out_degree(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.out_neighbors], dtype=int)

    def edges(self) -> list[tuple[int, int, float]]:
        src, dst = np.nonzero(self.adjacency)
        return [(int(i), int(j), float(self.adjacency[i, j])) for i, j in zip(src, dst)]

    def is_regular(self) -> bool:
        k_in, k_out = self.in_degree, self.out_degree
        return bool(np.all(k_in == k_in[0]) and np.all(k_out == k_in[0])) if self.n else True


def network_from_adjacency(adjacency, directed: bool = True) -> Network:
    a = np.array(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NetworkError(f"adjacency must be square, got shape {a.shape}")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise NetworkError("adjacency weights must be finite and non-negative")
    a.setflags(write=False)
    linked = a > 0
    out_nb = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in linked)
    in_nb = tuple(tuple(int(i) for i in np.flatnonzero(col)) for col in linked.T)
    return Network(adjacency=a, in_neighbors=in_nb, out_neighbors=out_nb, directed=directed)


def build_network(
    edges: Iterable[Sequence], n: int, undirected: bool = False
) -> Network:
    """Build a network from ``(i, j, weight)`` triples.

    With ``undirected=True`` every edge is mirrored; giving both (i, j) and
    (j, i) then counts as a duplicate.
    """
    if n < 0:
        raise NetworkError(f"node count must be non-negative, got {n}")
    a = np.zeros((n, n))
    seen: set[tuple[int, int]] = set()
    for lineno, edge in enumerate(edges):
        if len(edge) == 2:
            i, j, w = edge[0], edge[1], 1.0
        elif len(edge) == 3:
            i, j, w = edge
        else:
            raise NetworkError(f"edge {lineno}: expected (i, j[, weight]), got {edge!r}")
        i, j, w = int(i), int(j), float(w)
        if not (0 <= i < n and 0 <= j < n):
            raise NetworkError(f"edge ({i}, {j}): node index out of range [0, {n})")
        if not w > 0:
            raise NetworkError(f"edge ({i}, {j}): weight must be positive, got {w}")
        key = (min(i, j), max(i, j)) if undirected else (i, j)
        if key in seen:
            raise NetworkError(f"duplicate edge ({i}, {j})")
        seen.add(key)
        a[i, j] = w
        if undirected:
            a[j, i] = w
    return network_from_adjacency(a, directed=not undirected)


# -- small generators, mostly for tests and examples ------------------------

def path_graph(n: int) -> Network:
    return build_network([(i, i + 1, 1.0) for i in range(n - 1)], n, undirected=True)


def ring_graph(n: int) -> Network:
    if n < 3:
        raise NetworkError("a ring needs at least 3 nodes")
    return build_network([(i, (i + 1) % n, 1.0) for i in range(n)], n, undirected=True)


def star_graph(leaves: int) -> Network:
    """Star with node 0 as the centre."""
    return build_network([(0, i, 1.0) for i in range(1, leaves + 1)], leaves + 1, undirected=True)


def complete_graph(n: int) -> Network:
    a = np.ones((n, n)) - np.eye(n)
    return network_from_adjacency(a, directed=False)


def erdos_renyi(n: int, p: float, rng: np.random.Generator, directed: bool = True) -> Network:
    draws = rng.random((n, n)) < p
    np.fill_diagonal(draws, False)
    if not directed:
        draws = np.triu(draws, 1)
        draws = draws | draws.T
    return network_from_adjacency(draws.astype(float), directed=directed)


def random_regular(n: int, k: int, rng: np.random.Generator, swaps_per_edge: int = 10) -> Network:
    """Undirected simple k-regular graph.

    Starts from a circulant graph and randomises it with degree-preserving
    double-edge swaps, which works for dense k where the pairing model
    almost never produces a simple graph.
    """
    if (n * k) % 2 or k >= n or k < 0:
        raise NetworkError(f"no simple {k}-regular graph on {n} nodes")
    edges = set()
    for i in range(n):
        for d in range(1, k // 2 + 1):
            edges.add(tuple(sorted((i, (i + d) % n))))
        if k % 2:
            edges.add(tuple(sorted((i, (i + n // 2) % n))))
    edge_list = sorted(edges)
    for _ in range(swaps_per_edge * len(edge_list)):
        a, b = rng.choice(len(edge_list), 2, replace=False)
        (u, v), (x, y) = edge_list[a], edge_list[b]
        if rng.random() < 0.5:
            x, y = y, x
        e1, e2 = tuple(sorted((u, x))), tuple(sorted((v, y)))
        if u == x or v == y or e1 in edges or e2 in edges:
            continue
        edges -= {edge_list[a], edge_list[b]}
        edges |= {e1, e2}
        edge_list[a], edge_list[b] = e1, e2
    return build_network([(a, b, 1.0) for a, b in sorted(edges)], n, undirected=True)


# -- node state -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NodeState:
    """Failure flags ``s``, fragility ``phi`` and thresholds per node."""

    s: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    theta_prime: Optional[np.ndarray] = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int8)
        phi = np.asarray(self.phi, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if not (s.shape == phi.shape == theta.shape) or s.ndim != 1:
            raise ValueError(
                f"s, phi, theta must be equal-length vectors, got "
                f"{s.shape}, {phi.shape}, {theta.shape}"
            )
        if np.any((s != 0) & (s != 1)):
            raise ValueError("failure flags must be 0 or 1")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)
        if self.theta_prime is not None:
            tp = np.asarray(self.theta_prime, dtype=float)
            if tp.shape != theta.shape:
                raise ValueError("theta_prime must match theta in length")
            object.__setattr__(self, "theta_prime", tp)

    @classmethod
    def healthy(cls, theta, phi=None, theta_prime=None) -> "NodeState":
        theta = np.asarray(theta, dtype=float)
        phi = np.zeros_like(theta) if phi is None else phi
        return cls(np.zeros(theta.shape, dtype=np.int8), phi, theta, theta_prime)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def z(self) -> np.ndarray:
        return self.phi - self.theta

    @property
    def z_prime(self) -> np.ndarray:
        tp = self.theta if self.theta_prime is None else self.theta_prime
        return self.phi - tp

    def with_(self, **changes) -> "NodeState":
        return replace(self, **changes)

    def same_as(self, other: "NodeState") -> bool:
        return (
            np.array_equal(self.s, other.s)
            and np.array_equal(self.phi, other.phi)
            and np.array_equal(self.theta, other.theta)
        )


def net_fragility(state: NodeState, i: int) -> float:
    return float(state.phi[i] - state.theta[i])


def apply_threshold(state: NodeState) -> NodeState:
    """Fail every node with z >= 0; failed nodes stay failed."""
    s = ((state.s == 1) | (state.z >= 0)).astype(np.int8)
    return state.with_(s=s)


def fraction_failed(state: NodeState) -> float:
    return float(state.s.mean()) if state.n else 0.0


@dataclass
class CascadeTrace:
    states: list[NodeState]
    x_series: list[float]
    terminated_at: int
    converged: bool = True

    @property
    def final(self) -> NodeState:
        return self.states[-1]

    @property
    def x_star(self) -> float:
        return self.x_series[-1]

    def __len__(self) -> int:
        return len(self.states)


def run_cascade(model, network: Network, init: NodeState, max_steps: Optional[int] = None,
                strict: bool = True) -> CascadeTrace:
    """Iterate a deterministic model to its fixed point.

    ``model`` must provide ``initial_state(network, init)`` and
    ``advance(network, state, s_next)``; :class:`cascade_lab.models.ModelSpec`
    does.  Each step fails all nodes with z >= 0, then recomputes fragility
    for the new failure vector.  The run stops as soon as a step fails no new
    node; the unchanged state is not appended.
    """
    if init.n != network.n:
        raise ValueError(f"state has {init.n} nodes, network has {network.n}")
    if max_steps is None:
        max_steps = network.n + 1
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")

    state = model.initial_state(network, init)
    states = [state]
    xs = [fraction_failed(state)]
    for _ in range(max_steps):
        s_next = apply_threshold(state).s
        if np.array_equal(s_next, state.s):
            return CascadeTrace(states, xs, terminated_at=len(states) - 1)
        state = state.with_(s=s_next, phi=model.advance(network, state, s_next))
        states.append(state)
        xs.append(fraction_failed(state))

    if np.array_equal(apply_threshold(state).s, state.s):
        return CascadeTrace(states, xs, terminated_at=len(states) - 1)
    trace = CascadeTrace(states, xs, terminated_at=len(states) - 1, converged=False)
    if strict:
        raise CascadeDidNotTerminate(trace)
    return trace

"""Deterministic fragility-update rules.

Three classes of load transfer:

* constant load -- a failure adds a fixed increment to neighbours, scaled by
  the receiver's in-degree (inward) or the sender's out-degree (outward);
* load redistribution -- a failing node passes on its whole load;
* overload redistribution -- only the excess ``phi - theta`` is passed on.

The two redistribution classes come in a conserving variant (LLSC: links
through failed nodes keep carrying load) and a shedding variant (LLSS: load
only reaches surviving direct neighbours, otherwise it is lost).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .network import Network, NodeState

CONSTANT = "constant_load"
LOAD = "load_redistribution"
OVERLOAD = "overload_redistribution"

VARIANTS = {
    CONSTANT: ("inward", "outward"),
    LOAD: ("llsc", "llss"),
    OVERLOAD: ("llsc", "llss"),
}

MODEL_NAMES = {
    "constant-in": (CONSTANT, "inward"),
    "constant-out": (CONSTANT, "outward"),
    "load-llsc": (LOAD, "llsc"),
    "load-llss": (LOAD, "llss"),
    "overload-llsc": (OVERLOAD, "llsc"),
    "overload-llss": (OVERLOAD, "llss"),
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModelSpec:
    kind: str
    variant: str
    phi0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ModelError(f"unknown model class {self.kind!r}")
        if self.variant not in VARIANTS[self.kind]:
            raise ModelError(
                f"variant {self.variant!r} is not legal for {self.kind}; "
                f"expected one of {VARIANTS[self.kind]}"
            )
        if self.phi0 is not None:
            phi0 = np.asarray(self.phi0, dtype=float)
            if phi0.ndim != 1:
                raise ModelError("phi0 must be a vector")
            if self.kind == LOAD and np.any(phi0 < 0):
                raise ModelError("load redistribution needs phi0 >= 0")
            object.__setattr__(self, "phi0", phi0)
        elif self.kind == LOAD:
            raise ModelError("load redistribution needs an initial load vector phi0")

    @classmethod
    def from_name(cls, name: str, phi0=None) -> "ModelSpec":
        try:
            kind, variant = MODEL_NAMES[name]
        except KeyError:
            raise ModelError(
                f"unknown model {name!r}; expected one of {sorted(MODEL_NAMES)}"
            ) from None
        return cls(kind, variant, phi0)

    @property
    def name(self) -> str:
        for key, value in MODEL_NAMES.items():
            if value == (self.kind, self.variant):
                return key
        raise AssertionError("unreachable")

    def initial_load(self, n: int) -> np.ndarray:
        if self.phi0 is None:
            return np.zeros(n)
        if self.phi0.shape[0] != n:
            raise ModelError(f"phi0 has {self.phi0.shape[0]} entries, network has {n} nodes")
        return self.phi0

    # hooks used by network.run_cascade

    def initial_state(self, network: Network, init: NodeState) -> NodeState:
        if self.kind == CONSTANT:
            return init.with_(phi=self._static_fragility(network, init))
        phi0 = self.initial_load(network.n)
        start = init.with_(phi=phi0.copy())
        if self.variant == "llsc":
            return start.with_(phi=fragility_llsc(network, start, self))
        return start

    def advance(self, network: Network, state: NodeState, s_next: np.ndarray) -> np.ndarray:
        if self.kind == CONSTANT or self.variant == "llsc":
            return self._static_fragility(network, state.with_(s=s_next))
        return llss_fragility(network, state, self)

    def _static_fragility(self, network: Network, state: NodeState) -> np.ndarray:
        if self.variant == "inward":
            return fragility_constant_inward(network, state)
        if self.variant == "outward":
            return fragility_constant_outward(network, state)
        return fragility_llsc(network, state, self)

    def fragility_rule(self) -> Callable[[Network, NodeState], np.ndarray]:
        """Fragility as a function of the current failure vector.

        Only defined for rules without memory, i.e. not for LLSS.
        """
        if self.variant == "llss":
            raise ModelError("LLSS fragility depends on history; no static rule exists")
        return self._static_fragility


def _links(network: Network) -> np.ndarray:
    return (network.adjacency > 0).astype(float)


def fragility_constant_inward(network: Network, state: NodeState) -> np.ndarray:
    """Fraction of failed in-neighbours; 0 for nodes without in-neighbours."""
    k_in = network.in_degree
    failed_in = _links(network).T @ state.s.astype(float)
    return np.divide(failed_in, k_in, out=np.zeros(network.n), where=k_in > 0)


def fragility_constant_outward(network: Network, state: NodeState) -> np.ndarray:
    """Sum of ``1 / k_out(j)`` over failed in-neighbours j."""
    k_out = network.out_degree
    share = np.divide(state.s.astype(float), k_out, out=np.zeros(network.n), where=k_out > 0)
    return _links(network).T @ share


def reach_healthy_out(network: Network, state: NodeState, j: int) -> set[int]:
    """Healthy nodes reachable from j through failed intermediate nodes."""
    s = state.s
    found: set[int] = set()
    visited = {j}
    queue = deque([j])
    while queue:
        u = queue.popleft()
        for v in network.out_neighbors[u]:
            if v in visited:
                continue
            visited.add(v)
            if s[v]:
                queue.append(v)
            else:
                found.add(v)
    return found


def reach_failed_in(network: Network, state: NodeState, i: int) -> set[int]:
    """Failed nodes from which i is reachable through failed intermediate nodes."""
    s = state.s
    found: set[int] = set()
    queue = deque([i])
    while queue:
        u = queue.popleft()
        for v in network.in_neighbors[u]:
            if s[v] and v not in found and v != i:
                found.add(v)
                queue.append(v)
    return found


def _transferable(spec: ModelSpec, load: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return load - theta if spec.kind == OVERLOAD else load


def fragility_llsc(network: Network, state: NodeState, spec: ModelSpec) -> np.ndarray:
    """Initial load plus reach-weighted shares of upstream failed loads.

    Failed nodes keep their previous fragility.  A failed node with no
    healthy node in reach sheds its load.
    """
    if spec.kind == CONSTANT:
        raise ModelError("LLSC applies to the redistribution classes only")
    phi0 = spec.initial_load(network.n)
    load = _transferable(spec, phi0, state.theta)
    phi = np.where(state.s == 1, state.phi, phi0)
    for j in np.flatnonzero(state.s):
        reach = reach_healthy_out(network, state, int(j))
        if not reach:
            continue
        share = load[j] / len(reach)
        for i in reach:
            phi[i] += share
    return phi


def llss_fragility(network: Network, state: NodeState, spec: ModelSpec) -> np.ndarray:
    """Fragility at t+1 under local load sharing with shedding."""
    if spec.kind == CONSTANT:
        raise ModelError("LLSS applies to the redistribution classes only")
    healthy = state.s == 0
    failing = healthy & (state.phi >= state.theta)
    surviving = healthy & ~failing
    load = _transferable(spec, state.phi, state.theta)

    phi = np.where(surviving, state.phi, 0.0)
    for j in np.flatnonzero(failing):
        recipients = [i for i in network.out_neighbors[j] if surviving[i]]
        if not recipients:
            continue
        share = load[j] / len(recipients)
        for i in recipients:
            phi[i] += share
    return phi


def step_llss(network: Network, state_t: NodeState, spec: ModelSpec) -> NodeState:
    s_next = ((state_t.s == 1) | (state_t.phi >= state_t.theta)).astype(np.int8)
    return state_t.with_(s=s_next, phi=llss_fragility(network, state_t, spec))

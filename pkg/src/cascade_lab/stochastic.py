"""Stochastic failure and recovery.

A healthy node fails with ``p(1|0) = gamma * L`` and a failed node recovers
with ``p(0|1) = gamma' * (1 - L)``, where ``L`` is the logit of
``beta * z + beta' * z'`` with ``z = phi - theta`` and ``z' = phi - theta'``.
``beta -> inf`` gives back the deterministic threshold rule; ``beta -> 0``
makes every transition a coin flip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import expit

from .meanfield import DiscretizedDensity
from .network import CascadeTrace, Network, NodeState, fraction_failed

FragilityRule = Callable[[Network, NodeState], np.ndarray]


@dataclass(frozen=True)
class TransitionParams:
    beta: float = 1.0
    beta_prime: float = 1.0
    gamma: float = 1.0
    gamma_prime: float = 1.0
    theta: float = 0.0
    theta_prime: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "gamma_prime"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.beta < 0 or self.beta_prime < 0:
            raise ValueError("beta and beta_prime must be non-negative")


def _activation(z, z_prime, beta: float, beta_prime: float):
    """``beta * z + beta' * z'``, with infinite intensities reduced to signs."""
    z = np.asarray(z, dtype=float)
    z_prime = np.asarray(z_prime, dtype=float)
    if math.isinf(beta) or math.isinf(beta_prime):
        lead = (z if math.isinf(beta) else 0.0) + (z_prime if math.isinf(beta_prime) else 0.0)
        # Heaviside convention: ties fail
        return np.where(lead >= 0, np.inf, -np.inf)
    return beta * z + beta_prime * z_prime


def logit_prob(z, z_prime, params: TransitionParams):
    """``exp(beta z) / (exp(beta z) + exp(-beta' z'))``, overflow-safe."""
    return expit(_activation(z, z_prime, params.beta, params.beta_prime))


def transition_probs(z, z_prime, params: TransitionParams):
    """Return ``(p_fail, p_recover)`` for healthy and failed nodes."""
    a = _activation(z, z_prime, params.beta, params.beta_prime)
    return params.gamma * expit(a), params.gamma_prime * expit(-a)


def _node_probs(state: NodeState, params: TransitionParams, phi: np.ndarray):
    theta = state.theta
    theta_prime = state.theta if state.theta_prime is None else state.theta_prime
    return transition_probs(phi - theta, phi - theta_prime, params)


def stochastic_step(network: Network, state: NodeState, params: TransitionParams,
                    fragility_rule: FragilityRule,
                    rng: Union[np.random.Generator, int, None]) -> NodeState:
    """Resample every node once, synchronously.

    Node thresholds come from ``state``; ``params`` supplies the noise and
    range parameters.  The returned state carries fragility recomputed for
    the new failure vector.
    """
    rng = np.random.default_rng(rng)
    phi = fragility_rule(network, state)
    p_fail, p_recover = _node_probs(state, params, phi)
    u = rng.random(state.n)
    s_next = np.where(state.s == 0, u < p_fail, u >= p_recover).astype(np.int8)
    nxt = state.with_(s=s_next)
    return nxt.with_(phi=fragility_rule(network, nxt))


def run_stochastic(network: Network, init: NodeState, params: TransitionParams,
                   fragility_rule: FragilityRule, steps: int, seed) -> CascadeTrace:
    """Fixed-length stochastic trajectory, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    state = init.with_(phi=fragility_rule(network, init))
    states, xs = [state], [fraction_failed(state)]
    for _ in range(steps):
        state = stochastic_step(network, state, params, fragility_rule, rng)
        states.append(state)
        xs.append(fraction_failed(state))
    return CascadeTrace(states, xs, terminated_at=steps, converged=False)


# -- macroscopic maps ---------------------------------------------------------

def macro_step(X: float, pz: Union[DiscretizedDensity, float], params: TransitionParams) -> float:
    """Expected failed fraction after one step.

    ``pz`` is the net-fragility density (bin centres carry the mass) or a
    single value for the homogeneous case.  The recovery argument is
    ``z' = z + theta - theta'``.
    """
    if not 0.0 <= X <= 1.0:
        raise ValueError(f"X must lie in [0, 1], got {X}")
    shift = params.theta - params.theta_prime
    if isinstance(pz, DiscretizedDensity):
        z, w = pz.centers, pz.mass
    else:
        z, w = np.array([float(pz)]), np.array([1.0])
    p_fail, p_recover = transition_probs(z, z + shift, params)
    nxt = X + (1.0 - X) * float(w @ p_fail) - X * float(w @ p_recover)
    return min(1.0, max(0.0, nxt))


@dataclass(frozen=True)
class VmResponse:
    """Frequency-dependent response of the nonlinear voter model."""

    f1: Callable[[float], float]
    f2: Callable[[float], float]

    @classmethod
    def linear(cls) -> "VmResponse":
        return cls(lambda f: 1.0, lambda f: 1.0)

    def check(self, samples: int = 101) -> None:
        for f in np.linspace(0.0, 1.0, samples):
            up, down = f * self.f1(f), (1.0 - f) * self.f2(f)
            if not (0.0 <= up <= 1.0 and 0.0 <= down <= 1.0):
                raise ValueError(f"response leaves [0, 1] at f={f:.3g}")


def vm_macro_step(X: float, response: VmResponse) -> float:
    if not 0.0 <= X <= 1.0:
        raise ValueError(f"X must lie in [0, 1], got {X}")
    nxt = X + (1.0 - X) * X * (response.f1(X) - response.f2(X))
    return min(1.0, max(0.0, nxt))


@dataclass(frozen=True)
class SisParams:
    nu: float
    delta: float
    k: int

    def __post_init__(self):
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError(f"nu must lie in [0, 1], got {self.nu}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def nu_c(self) -> float:
        return self.delta / self.k

    def fixed_point(self) -> float:
        """Stable fixed point of the mean-field map."""
        if self.nu < self.nu_c or self.nu == 0.0:
            return 0.0
        return 1.0 - self.delta / (self.nu * self.k)


def sis_macro_step(X: float, p: SisParams) -> float:
    if not 0.0 <= X <= 1.0:
        raise ValueError(f"X must lie in [0, 1], got {X}")
    nxt = X + p.nu * p.k * X * (1.0 - X) - p.delta * X
    return min(1.0, max(0.0, nxt))


def iterate_map(step: Callable[[float], float], x0: float, steps: int) -> list[float]:
    xs = [float(x0)]
    for _ in range(steps):
        xs.append(step(xs[-1]))
    return xs


def converge_map(step: Callable[[float], float], x0: float, tol: float = 1e-13,
                 max_iter: int = 1_000_000) -> float:
    x = float(x0)
    for _ in range(max_iter):
        nxt = step(x)
        if abs(nxt - x) <= tol:
            return nxt
        x = nxt
    raise RuntimeError(f"map did not settle within {max_iter} iterations (x={x:.12g})")


# -- voter model Monte Carlo --------------------------------------------------

@dataclass
class VoterRun:
    final: np.ndarray  # (replicas, n) final states
    x_series: np.ndarray  # (sweeps + 1, replicas) failed fraction per unit time
    consensus_time: np.ndarray  # sweep index at consensus, -1 if none

    @property
    def consensus_one(self) -> float:
        return float(np.mean(self.final.min(axis=1) == 1))

    @property
    def consensus_zero(self) -> float:
        return float(np.mean(self.final.max(axis=1) == 0))


def voter_model(network: Network, s0, replicas: int, seed, max_sweeps: int = 100_000,
                stop_at_consensus: bool = True) -> VoterRun:
    """Classic voter model, all replicas advanced together.

    Each micro-update picks a random node and copies the state of a random
    in-neighbour; ``n`` micro-updates make one unit of time.
    """
    n = network.n
    k_in = network.in_degree
    if n == 0 or np.any(k_in == 0):
        raise ValueError("every node needs at least one in-neighbour")
    width = int(k_in.max())
    table = np.zeros((n, width), dtype=np.int64)
    for i, nb in enumerate(network.in_neighbors):
        table[i, : len(nb)] = nb

    rng = np.random.default_rng(seed)
    s = np.tile(np.asarray(s0, dtype=np.int8), (replicas, 1))
    rows = np.arange(replicas)
    xs = [s.mean(axis=1)]
    consensus = np.full(replicas, -1)
    done = (s.min(axis=1) == s.max(axis=1))
    consensus[done] = 0
    for sweep in range(1, max_sweeps + 1):
        if stop_at_consensus and np.all(consensus >= 0):
            break
        for _ in range(n):
            i = rng.integers(0, n, replicas)
            pick = (rng.random(replicas) * k_in[i]).astype(np.int64)
            s[rows, i] = s[rows, table[i, pick]]
        xs.append(s.mean(axis=1))
        now = (s.min(axis=1) == s.max(axis=1)) & (consensus < 0)
        consensus[now] = sweep
    return VoterRun(final=s, x_series=np.array(xs), consensus_time=consensus)

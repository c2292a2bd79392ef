"""Eisenberg-Noe clearing of interbank liabilities.

Firm i owes ``x0[i]`` in total, a fraction ``A[i, j]`` of it to firm j, and
has operating cash flow ``theta[i]``.  A clearing vector satisfies
``x_i = min(theta_i + sum_j A[j, i] x_j, x0_i)``; we compute the greatest one
with the fictitious default algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FinancialSystem:
    x0: np.ndarray
    A: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        A = np.asarray(self.A, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        n = x0.shape[0] if x0.ndim == 1 else -1
        if x0.ndim != 1 or theta.shape != (n,) or A.shape != (n, n):
            raise ValueError(
                f"inconsistent shapes: x0 {x0.shape}, A {A.shape}, theta {theta.shape}"
            )
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @classmethod
    def from_dict(cls, data: dict) -> "FinancialSystem":
        system = cls(data["x0"], data["A"], data["theta"])
        if "n" in data and int(data["n"]) != system.n:
            raise ValueError(f"n={data['n']} does not match x0 of length {system.n}")
        return system

    def to_dict(self) -> dict:
        return {"n": self.n, "x0": self.x0.tolist(), "A": self.A.tolist(),
                "theta": self.theta.tolist()}


@dataclass
class ClearingResult:
    x_star: np.ndarray
    defaults: list[int]
    iterations: int
    equity: np.ndarray
    diverged: bool = False
    candidates: list[np.ndarray] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star.tolist(),
            "defaults": list(self.defaults),
            "equity": self.equity.tolist(),
            "iterations": self.iterations,
            "diverged": self.diverged,
        }


def validate_system(sys: FinancialSystem) -> list[str]:
    """All violations of the liability-matrix conditions; empty if valid."""
    problems = []
    if np.any(~np.isfinite(sys.A)) or np.any(~np.isfinite(sys.x0)) or np.any(~np.isfinite(sys.theta)):
        problems.append("non-finite entries")
    if np.any(sys.A < 0):
        problems.append("A has negative entries at " + str(np.argwhere(sys.A < 0).tolist()))
    diag = np.flatnonzero(np.diag(sys.A) != 0)
    if diag.size:
        problems.append(f"A has non-zero diagonal at rows {diag.tolist()}")
    if np.any(sys.x0 < 0):
        problems.append(f"negative obligations at {np.flatnonzero(sys.x0 < 0).tolist()}")
    if np.any(sys.theta < 0):
        problems.append(f"negative operating cash flow at {np.flatnonzero(sys.theta < 0).tolist()}")
    sums = sys.A.sum(axis=1)
    for i in range(sys.n):
        if sys.x0[i] > 0 and abs(sums[i] - 1.0) > ROW_SUM_TOL:
            problems.append(f"row {i} sums to {sums[i]:.12g}, expected 1")
        elif sys.x0[i] == 0 and sums[i] != 0 and abs(sums[i] - 1.0) > ROW_SUM_TOL:
            problems.append(f"row {i} (no obligations) sums to {sums[i]:.12g}, expected 0 or 1")
    return problems


def inflows(sys: FinancialSystem, x) -> np.ndarray:
    return sys.A.T @ np.asarray(x, dtype=float)


def clearing_iterate(sys: FinancialSystem, x) -> np.ndarray:
    """``min(theta + A^T x, x0)`` componentwise."""
    return np.minimum(sys.theta + inflows(sys, x), sys.x0)


def en_fragility(sys: FinancialSystem, x) -> np.ndarray:
    """Debt left to be covered by operating cash: ``x0 - A^T x``."""
    return sys.x0 - inflows(sys, x)


def equity(sys: FinancialSystem, x) -> np.ndarray:
    return sys.theta + inflows(sys, x) - np.asarray(x, dtype=float)


def _greatest_by_iteration(sys: FinancialSystem, x, tol: float, max_iter: int):
    for _ in range(max_iter):
        nxt = clearing_iterate(sys, x)
        if np.max(np.abs(nxt - x), initial=0.0) <= tol:
            return nxt
        x = nxt
    return x


def fictitious_default(sys: FinancialSystem, tol: float = 1e-10,
                       max_rounds: int | None = None) -> ClearingResult:
    """Greatest clearing vector via the fictitious default algorithm.

    Start from full payment.  Each round marks as defaulting every firm
    whose cash plus inflow falls short of its obligation, then solves the
    linear system in which defaulting firms pay out everything they receive
    and the others pay in full.  The default set only grows, so at most n
    rounds change it.

    If the defaulting firms form a closed system the linear solve is
    singular; the result is then flagged ``diverged`` and the payments fall
    back to monotone iteration from the last candidate.
    """
    n = sys.n
    if max_rounds is None:
        max_rounds = 10 * n + 1
    x = sys.x0.copy()
    candidates = [x.copy()]
    default = np.zeros(n, dtype=bool)
    diverged = False
    rounds = 0
    while True:
        rounds += 1
        shortfall = sys.theta + inflows(sys, x) < sys.x0 - tol
        new_default = default | shortfall
        if np.array_equal(new_default, default) or rounds > max_rounds:
            break
        default = new_default
        d = np.flatnonzero(default)
        keep = np.flatnonzero(~default)
        # x_d = theta_d + A_dd^T x_d + A_kd^T x0_k
        lhs = np.eye(d.size) - sys.A[np.ix_(d, d)].T
        rhs = sys.theta[d] + sys.A[np.ix_(keep, d)].T @ sys.x0[keep]
        try:
            if np.linalg.cond(lhs) > 1e12:
                raise np.linalg.LinAlgError("singular default subsystem")
            x_d = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            diverged = True
            x = _greatest_by_iteration(sys, x, tol * 1e-2, 1_000_000)
            candidates.append(x.copy())
            break
        x = sys.x0.copy()
        x[d] = np.clip(x_d, 0.0, sys.x0[d])
        candidates.append(x.copy())

    defaults = [int(i) for i in np.flatnonzero(x < sys.x0 - tol)]
    return ClearingResult(
        x_star=x, defaults=defaults, iterations=rounds, equity=equity(sys, x),
        diverged=diverged, candidates=candidates,
    )

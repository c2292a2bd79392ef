"""Mean-field recursions for the final fraction of failed nodes.

Thresholds are normal, ``theta ~ N(mu, sigma)``, so the initial net fragility
is ``z(0) ~ N(-mu, sigma)`` and ``X(0) = Phi(-mu / sigma)``.  (For load
redistribution the threshold mean is shifted by the uniform initial load.)

MF1 assumes a fully connected network and reduces each model class to a
scalar map ``X -> P_theta(<phi>(X))``.  MF2 and MF3 treat constant load on a
k-regular network: MF2 spreads the fragility binomially over ``j/k`` given
the current failed fraction, MF3 evolves the whole partial density of
healthy nodes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import comb, ndtr, ndtri

CONSTANT = "constant_load"
LOAD = "load_redistribution"
OVERLOAD = "overload_redistribution"

_CLASS_ALIASES = {
    "i": CONSTANT, "constant": CONSTANT, CONSTANT: CONSTANT,
    "ii": LOAD, "load": LOAD, LOAD: LOAD,
    "iii": OVERLOAD, "overload": OVERLOAD, OVERLOAD: OVERLOAD,
}

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
FULL_BREAKDOWN = 1.0 - 1e-8

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class FixedPointError(RuntimeError):
    def __init__(self, message, x=None, residual=None, where=None):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.where = where


class GridOverflowError(RuntimeError):
    pass


def model_class(name: str) -> str:
    try:
        return _CLASS_ALIASES[name]
    except KeyError:
        raise ValueError(
            f"unknown model class {name!r}; expected one of i, ii, iii, "
            "constant, load, overload"
        ) from None


# -- distribution toolkit ---------------------------------------------------

@dataclass(frozen=True)
class ThresholdDistribution:
    mu: float
    sigma: float
    family: str = "normal"

    def __post_init__(self):
        if self.family != "normal":
            raise ValueError(f"only the normal family is supported, got {self.family!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def pdf(self, x):
        u = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * u * u) / (_SQRT_2PI * self.sigma)


def normal_cdf(x, dist: ThresholdDistribution):
    return dist.cdf(x)


def quantile(p, dist: ThresholdDistribution):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise ValueError(f"quantile needs p in (0, 1), got {p}")
    return dist.mu + dist.sigma * ndtri(p_arr)


def _std_pdf(u):
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def _lower_first_moment(X, mu, sigma):
    """Integral of theta * p(theta) below the X-quantile; 0 at X = 0."""
    a = ndtri(X)  # -inf at 0, +inf at 1; pdf vanishes at both
    return mu * X - sigma * _std_pdf(a)


def truncated_mean_below(X, dist: ThresholdDistribution):
    """Mean threshold of the lowest fraction X of the population."""
    X_arr = np.asarray(X, dtype=float)
    if np.any((X_arr <= 0) | (X_arr > 1)):
        raise ValueError(f"truncated mean needs X in (0, 1], got {X}")
    return _lower_first_moment(X_arr, dist.mu, dist.sigma) / X_arr


# -- MF1 ----------------------------------------------------------------------

def _mf1_map(kind: str, X, mu, sigma, phi0=0.0):
    """Vectorised MF1 step; ``mu`` is the threshold mean used by P_theta."""
    X = np.asarray(X, dtype=float)
    full = X >= 1.0
    Xs = np.where(full, 0.0, X)
    if kind == CONSTANT:
        arg = Xs
    elif kind == LOAD:
        arg = phi0 / (1.0 - Xs)
    elif kind == OVERLOAD:
        arg = -_lower_first_moment(Xs, mu, sigma) / (1.0 - Xs)
    else:
        raise ValueError(f"unknown model class {kind!r}")
    out = ndtr((arg - mu) / sigma)
    return np.where(full, 1.0, out)


def mf1_step(kind: str, X: float, dist: ThresholdDistribution, phi0: float = 0.0) -> float:
    """One fully connected mean-field step.

    ``dist`` is the threshold distribution itself; for load redistribution
    its mean should already include the initial load.
    """
    kind = model_class(kind)
    if not 0.0 <= X <= 1.0:
        raise ValueError(f"X must lie in [0, 1], got {X}")
    return float(_mf1_map(kind, X, dist.mu, dist.sigma, phi0))


def solve_fixed_point(step: Callable[[float], float], x0: float, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Iterate ``step`` from ``x0`` until ``|step(x) - x| <= tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = float(x0)
    for _ in range(max_iter + 1):
        nxt = float(step(x))
        if abs(nxt - x) <= tol:
            return nxt
        x = nxt
    raise FixedPointError(
        f"no fixed point within {max_iter} iterations (x={x:.12g})", x=x,
        residual=abs(float(step(x)) - x),
    )


def _solve_fixed_points(step, x0: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Masked simultaneous iteration of an elementwise map.

    ``step(x, idx)`` maps the active cells ``idx`` (flat indices) to new values.
    """
    x = np.array(x0, dtype=float).ravel()
    active = np.arange(x.size)
    for _ in range(max_iter + 1):
        if active.size == 0:
            return x.reshape(np.shape(x0))
        nxt = step(x[active], active)
        done = np.abs(nxt - x[active]) <= tol
        x[active] = nxt
        active = active[~done]
    raise FixedPointError(
        f"{active.size} cells did not converge within {max_iter} iterations",
        x=x.reshape(np.shape(x0)), where=active,
    )


# -- MF2 ----------------------------------------------------------------------

def binomial_weights(k: int, q) -> np.ndarray:
    """``B(j, k, q)`` for j = 0..k along the last axis."""
    q = np.asarray(q, dtype=float)[..., None]
    j = np.arange(k + 1)
    return comb(k, j) * q**j * (1.0 - q) ** (k - j)


def mf2_step(k: int, X: float, dist: ThresholdDistribution) -> float:
    if k < 1:
        raise ValueError("degree k must be >= 1")
    if not 0.0 <= X <= 1.0:
        raise ValueError(f"X must lie in [0, 1], got {X}")
    levels = np.arange(k + 1) / k
    return float(binomial_weights(k, X) @ dist.cdf(levels))


# -- MF3 ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscretizedDensity:
    """Bin masses over ``[z_min, z_max]`` split into ``bins`` equal bins."""

    z_min: float
    z_max: float
    bins: int
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.bins,):
            raise ValueError(f"expected {self.bins} bin masses, got shape {mass.shape}")
        if not self.z_max > self.z_min:
            raise ValueError("z_max must exceed z_min")
        if np.any(mass < -1e-15):
            raise ValueError("bin masses must be non-negative")
        object.__setattr__(self, "mass", np.clip(mass, 0.0, None))

    @property
    def width(self) -> float:
        return (self.z_max - self.z_min) / self.bins

    @property
    def edges(self) -> np.ndarray:
        return self.z_min + self.width * np.arange(self.bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.z_min + self.width * (np.arange(self.bins) + 0.5)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def healthy_mask(self) -> np.ndarray:
        # z = 0 fails, so only bins lying below zero are healthy
        return self.centers < 0

    def mass_below_zero(self) -> float:
        return float(self.mass[self.healthy_mask].sum())

    def mass_at_or_above_zero(self) -> float:
        return float(self.mass[~self.healthy_mask].sum())

    def with_mass(self, mass) -> "DiscretizedDensity":
        return DiscretizedDensity(self.z_min, self.z_max, self.bins, mass)


def mf3_grid(dist: ThresholdDistribution, k: int, bins: int = 4000,
             upper: float = 2.5) -> tuple[float, float, int]:
    """Grid bounds with zero on a bin edge and 1/k a whole number of bins.

    Covers roughly ``[-6 sigma - mu - 1.5, upper]`` with about ``bins`` bins.
    """
    lower_span = 6.0 * dist.sigma + abs(dist.mu) + 1.5
    target = (lower_span + upper) / bins
    per_step = max(1, math.ceil(1.0 / (k * target)))
    h = 1.0 / (k * per_step)
    n_neg = math.ceil(lower_span / h)
    n_pos = math.ceil(upper / h)
    return -n_neg * h, n_pos * h, n_neg + n_pos


def initial_density(dist: ThresholdDistribution, z_min: float, z_max: float,
                    bins: int) -> DiscretizedDensity:
    """Density of ``z(0) = -theta`` with all nodes healthy.

    Bin masses are exact CDF differences; tails are folded into the end bins
    so the total mass is one.
    """
    edges = z_min + (z_max - z_min) / bins * np.arange(bins + 1)
    # P(z <= e) = P(theta >= -e)
    cdf = ndtr((edges + dist.mu) / dist.sigma)
    cdf[0], cdf[-1] = 0.0, 1.0
    return DiscretizedDensity(z_min, z_max, bins, np.diff(cdf))


def _shift(mass: np.ndarray, offset: float) -> np.ndarray:
    """Move mass right by ``offset`` bins, splitting linearly between bins."""
    lo = math.floor(offset + 1e-9)
    frac = offset - lo
    if frac < 1e-9:
        frac = 0.0
    n = mass.size
    out = np.zeros(n)
    reach = lo + (1 if frac > 0 else 0)
    if reach > 0 and np.any(mass[n - reach:] > 0):
        raise GridOverflowError(
            f"shift of {offset:.4g} bins pushes mass past z_max; widen the grid"
        )
    if lo < n:
        out[lo:] += (1.0 - frac) * mass[: n - lo]
    if frac > 0 and lo + 1 < n:
        out[lo + 1:] += frac * mass[: n - lo - 1]
    return out


def mf3_step(k: int, ph: DiscretizedDensity) -> DiscretizedDensity:
    """Drop the currently failing mass and shift the rest by ``j/k``.

    The shift weights are binomial in the fraction of currently failing
    nodes ``X_f`` (mass at z >= 0).
    """
    if k < 1:
        raise ValueError("degree k must be >= 1")
    healthy = ph.healthy_mask
    x_failing = float(ph.mass[~healthy].sum())
    kept = np.where(healthy, ph.mass, 0.0)
    weights = binomial_weights(k, x_failing)
    out = np.zeros(ph.bins)
    for j, w in enumerate(weights):
        if w == 0.0:
            continue
        out += w * _shift(kept, (j / k) / ph.width)
    return ph.with_mass(out)


def solve_mf3(k: int, dist: ThresholdDistribution, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER, bins: int = 4000,
              return_series: bool = False):
    """Iterate the binned partial-density recursion to its fixed point."""
    z_min, z_max, nb = mf3_grid(dist, k, bins)
    ph = initial_density(dist, z_min, z_max, nb)
    xs = [0.0]
    for _ in range(max_iter):
        x_next = 1.0 - ph.mass_below_zero()
        xs.append(x_next)
        if x_next - xs[-2] <= tol and len(xs) > 2:
            break
        ph = mf3_step(k, ph)
    else:
        raise FixedPointError(f"MF3 did not converge within {max_iter} steps", x=xs[-1])
    return (xs[-1], xs, ph) if return_series else xs[-1]


def _mf3_counts(k: int, mu, sigma, tol: float, max_iter: int) -> np.ndarray:
    """MF3 fixed points through the distribution of accumulated increments.

    Healthy nodes gain ``j/k`` per step with j ~ Binomial(k, X_f), independent
    of their own net fragility, so a node with c accumulated increments is
    still healthy iff ``theta > c/k``.  Hence ``X(t+1) = sum_c P(c_t = c)
    P_theta(c/k)``.  This is the same recursion as the binned density, without
    the binning.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).ravel()
    cap = int(math.ceil(k * (float(np.max(mu)) + 9.0 * float(np.max(sigma))))) + k + 1
    cap = max(cap, k + 1)
    levels = np.arange(cap + 1) / k
    p_fail = ndtr((levels[None, :] - mu[:, None]) / sigma[:, None])
    p_fail[:, -1] = 1.0

    cells = mu.size
    pmf = np.zeros((cells, cap + 1))
    pmf[:, 0] = 1.0
    x_prev = np.zeros(cells)
    x = p_fail[:, 0].copy()
    x_star = np.empty(cells)
    active = np.arange(cells)
    for _ in range(max_iter):
        x_failing = np.clip(x - x_prev, 0.0, 1.0)
        weights = binomial_weights(k, x_failing)
        new = np.zeros_like(pmf)
        for j in range(k + 1):
            new[:, j:] += weights[:, j, None] * pmf[:, : cap + 1 - j]
            if j:
                new[:, -1] += weights[:, j] * pmf[:, cap + 1 - j:].sum(axis=1)
        pmf = new
        x_prev, x = x, np.einsum("ij,ij->i", pmf, p_fail[active])
        done = np.abs(x - x_prev) <= tol
        if np.any(done):
            x_star[active[done]] = x[done]
            keep = ~done
            active, pmf, x, x_prev = active[keep], pmf[keep], x[keep], x_prev[keep]
        if active.size == 0:
            return x_star
    raise FixedPointError(
        f"{active.size} MF3 cells did not converge within {max_iter} steps", where=active
    )


def mf3_fixed_point(k: int, dist: ThresholdDistribution, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> float:
    return float(_mf3_counts(k, dist.mu, dist.sigma, tol, max_iter)[0])


# -- phase diagrams -----------------------------------------------------------

@dataclass(frozen=True)
class Method:
    """Which solver fills a phase diagram.

    ``name`` is ``mf1``, ``mf2`` or ``mf3``; ``kind`` picks the model class for
    MF1; ``phi0`` is the uniform initial load (class ii); ``k`` the degree.
    """

    name: str
    kind: str = CONSTANT
    phi0: float = 0.0
    k: int = 3

    def __post_init__(self):
        if self.name not in ("mf1", "mf2", "mf3"):
            raise ValueError(f"unknown mean-field method {self.name!r}")
        object.__setattr__(self, "kind", model_class(self.kind))
        if self.name == "mf1" and self.kind == LOAD and not self.phi0 > 0:
            raise ValueError("load redistribution needs a positive initial load phi0")
        if self.name != "mf1" and self.kind != CONSTANT:
            raise ValueError(f"{self.name} is only defined for constant load")
        if self.k < 1:
            raise ValueError("degree k must be >= 1")

    def label(self) -> str:
        if self.name == "mf1":
            tag = {CONSTANT: "i", LOAD: "ii", OVERLOAD: "iii"}[self.kind]
            return f"mf1({tag}{', phi0=%g' % self.phi0 if self.kind == LOAD else ''})"
        return f"{self.name}(k={self.k})"


@dataclass
class PhaseDiagramGrid:
    mu_values: np.ndarray
    sigma_values: np.ndarray
    x_star: np.ndarray  # indexed [mu, sigma]
    x0: np.ndarray
    method: Optional[Method] = None
    tol: float = DEFAULT_TOL

    def rows(self):
        for a, mu in enumerate(self.mu_values):
            for b, sigma in enumerate(self.sigma_values):
                yield float(mu), float(sigma), float(self.x0[a, b]), float(self.x_star[a, b])


def _solve_cells(method: Method, mu: np.ndarray, sigma: np.ndarray, tol: float,
                 max_iter: int) -> np.ndarray:
    x0 = ndtr(-mu / sigma)
    if method.name == "mf3":
        return _mf3_counts(method.k, mu, sigma, tol, max_iter)
    if method.name == "mf2":
        levels = np.arange(method.k + 1) / method.k
        p_fail = ndtr((levels[None, :] - mu[:, None]) / sigma[:, None])

        def step(x, idx):
            return np.einsum("ij,ij->i", binomial_weights(method.k, x), p_fail[idx])
    else:
        theta_mu = mu + method.phi0 if method.kind == LOAD else mu

        def step(x, idx):
            return _mf1_map(method.kind, x, theta_mu[idx], sigma[idx], method.phi0)

    return _solve_fixed_points(step, x0, tol, max_iter)


def phase_diagram(method: Method, mu_grid: Sequence[float], sigma_grid: Sequence[float],
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  threads: int = 1) -> PhaseDiagramGrid:
    """X* over the (mu, sigma) plane, started from X(0) = Phi(-mu/sigma)."""
    mu_grid = np.asarray(mu_grid, dtype=float)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    if mu_grid.size == 0 or sigma_grid.size == 0:
        raise ValueError("mu and sigma grids must be non-empty")
    if not (np.all(np.isfinite(mu_grid)) and np.all(np.isfinite(sigma_grid))):
        raise ValueError("grids must be finite")
    if np.any(sigma_grid <= 0):
        raise ValueError("sigma grid values must be positive")

    mu_mesh, sigma_mesh = np.meshgrid(mu_grid, sigma_grid, indexing="ij")
    x0 = ndtr(-mu_mesh / sigma_mesh)
    rows = np.array_split(np.arange(mu_grid.size), max(1, min(threads, mu_grid.size)))

    def solve_rows(idx):
        try:
            return _solve_cells(method, mu_mesh[idx].ravel(), sigma_mesh[idx].ravel(),
                                tol, max_iter)
        except FixedPointError as exc:
            flat = np.atleast_1d(exc.where) if exc.where is not None else np.array([], int)
            coords = [
                (float(mu_mesh[idx].ravel()[c]), float(sigma_mesh[idx].ravel()[c]))
                for c in flat[:5]
            ]
            raise FixedPointError(
                f"{method.label()}: {exc} at (mu, sigma) = {coords}", where=coords
            ) from exc

    if len(rows) == 1:
        parts = [solve_rows(rows[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(rows)) as pool:
            parts = list(pool.map(solve_rows, rows))
    x_star = np.concatenate(parts).reshape(mu_mesh.shape)
    # fixed points are approached from below; guard rounding at the start cell
    x_star = np.maximum(x_star, x0)
    return PhaseDiagramGrid(mu_grid, sigma_grid, x_star, x0, method, tol)


def discontinuities(grid: PhaseDiagramGrid, jump: float = 0.5):
    """Boolean masks of adjacent-cell jumps larger than ``jump``.

    Returns ``(along_mu, along_sigma)`` with shapes ``(M-1, S)`` and
    ``(M, S-1)``; entry ``[a, b]`` flags the pair (a, b) / next cell.
    """
    xs = grid.x_star
    return np.abs(np.diff(xs, axis=0)) > jump, np.abs(np.diff(xs, axis=1)) > jump

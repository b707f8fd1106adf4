"""BP thresholds on the BEC.

* single layer: eps* = inf_x x / lambda(1 - rho(1 - x))
* bilayer: the q-function characterization, where
  q1(x) = x * Lambda1(u) / lambda1(u) with u = 1 - rho1(1 - x) (q2 likewise) and
  q(y) is the largest x with q1(x) = q2(y).  The threshold is the infimum over
  feasible y (q2(y) <= 1) of y / g(1, q(y), y), capped by eps1* / P0 whenever
  P0 > 0 and lambda2(0) = 0.
* any number of layers: bisection on eps with density evolution.

Infima are taken on a composite grid (geometric near 0, uniform elsewhere)
and the best few grid minima are polished with a bounded scalar search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .de_engine import DEFAULT_TOL, converges_to_zero, iterate_1d
from .degree_dist import DomainError, Ensemble, LayerSpec, complement_eval, horner

GRID_POINTS = 4096
GRID_FLOOR = 1e-12
REFINE_CANDIDATES = 3
REFINE_RTOL = 1e-8
ROOT_TOL = 1e-12
BISECTION_STEPS = 60
BISECTION_TOL = 1e-8
BISECTION_MAX_ITERS = 2_000_000

FORMULA_1D = "formula_1d"
CLOSED_FORM = "closed_form"
BISECTION = "bisection"


@dataclass
class ThresholdReport:
    epsilon_star: float
    method: str
    branch_values: tuple | None = None
    grid_points: int = 0
    tolerance: float = 0.0
    argmin: float | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.epsilon_star <= 1.0:
            raise ValueError(f"threshold outside [0, 1]: {self.epsilon_star}")

    def to_dict(self) -> dict:
        return {
            "epsilon_star": self.epsilon_star,
            "method": self.method,
            "branch_values": None if self.branch_values is None else list(self.branch_values),
            "grid_points": self.grid_points,
            "tolerance": self.tolerance,
            "argmin": self.argmin,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class StuckPoint:
    eps: float
    x_s: float
    a_s: float


def composite_grid(n: int = GRID_POINTS, floor: float = GRID_FLOOR) -> np.ndarray:
    """Ascending points in (0, 1]: half geometric from ``floor``, half uniform."""
    half = n // 2
    g = np.geomspace(floor, 1.0, half)
    u = np.linspace(0.0, 1.0, n - half + 1)[1:]
    return np.unique(np.concatenate([g, u]))


# -- single layer -----------------------------------------------------------

def _ratio_1d(lam, rho, x):
    den = horner(lam.exponent_coeffs, complement_eval(rho, x))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, np.asarray(x) / np.where(den > 0, den, 1.0), np.inf)


def _polish(fun, grid, vals, k=REFINE_CANDIDATES, rtol=REFINE_RTOL):
    """Refine the ``k`` best local grid minima; returns (value, argmin)."""
    n = len(grid)
    finite = np.isfinite(vals)
    if not finite.any():
        return math.inf, None
    v = np.where(finite, vals, np.inf)
    left = np.concatenate([[np.inf], v[:-1]])
    right = np.concatenate([v[1:], [np.inf]])
    loc = np.nonzero((v <= left) & (v <= right) & finite)[0]
    loc = loc[np.argsort(v[loc], kind="stable")][:k]
    best_v, best_x = float(v[loc[0]]), float(grid[loc[0]])
    for i in loc:
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, n - 1)]
        if b <= a:
            continue
        res = minimize_scalar(lambda z: min(fun(z), 1e300), bounds=(a, b), method="bounded",
                              options={"xatol": max(rtol * grid[i], 1e-300)})
        if res.success and np.isfinite(res.fun) and res.fun < best_v:
            best_v, best_x = float(res.fun), float(res.x)
    return best_v, best_x


def stability_limit(lam, rho) -> float:
    """Value of the single-layer ratio as x -> 0: 1 / (lambda_2 * rho'(1))."""
    l2 = lam.coeffs.get(2, 0.0)
    dr = rho.derivative_at_one()
    if l2 <= 0.0 or dr <= 0.0:
        return math.inf
    return 1.0 / (l2 * dr)


def threshold_1d(lam, rho, grid_points: int = GRID_POINTS) -> ThresholdReport:
    """BP threshold of a single (lambda, rho) pair."""
    if isinstance(lam, LayerSpec):
        lam, rho = lam.lam, lam.rho
    if lam.coeffs.get(1, 0.0) > 0.0:
        return ThresholdReport(0.0, FORMULA_1D, grid_points=0, tolerance=0.0, argmin=0.0,
                               notes=["lambda has degree-1 mass; no positive threshold"])
    grid = composite_grid(grid_points)
    vals = _ratio_1d(lam, rho, grid)

    def fun(x):
        return float(_ratio_1d(lam, rho, x))

    best, arg = _polish(fun, grid, vals)
    notes = []
    lim = stability_limit(lam, rho)
    if lim < best:
        best, arg = lim, 0.0
        notes.append("infimum attained as x -> 0 (stability limit)")
    if not math.isfinite(best) or best > 1.0:
        notes.append("ratio exceeds 1 everywhere; threshold capped at 1")
        best = 1.0
    return ThresholdReport(best, FORMULA_1D, grid_points=len(grid), tolerance=REFINE_RTOL,
                           argmin=arg, notes=notes)


# -- bilayer ----------------------------------------------------------------

def q_layer(layer: LayerSpec, x):
    """x * Lambda(u) / lambda(u) with u = 1 - rho(1 - x); inf where lambda(u) = 0."""
    u = complement_eval(layer.rho, x)
    num = horner(layer.Lam.exponent_coeffs, u)
    den = horner(layer.lam.exponent_coeffs, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, np.asarray(x) * num / np.where(den > 0, den, 1.0), np.inf)
    return out if np.ndim(out) else float(out)


def _scalar_q(layer, x):
    if not 0.0 < x <= 1.0:
        raise DomainError(f"q is defined on (0, 1], got {x}")
    v = q_layer(layer, x)
    if not math.isfinite(v):
        raise DomainError(f"q undefined at {x}: lambda(1 - rho(1 - x)) = 0")
    return v


def q1(e: Ensemble, x: float) -> float:
    return _scalar_q(e.layers[0], x)


def q2(e: Ensemble, y: float) -> float:
    return _scalar_q(e.layers[1], y)


class _QInverse:
    """Largest root of q1(x) = t, vectorized over t.

    Walk a descending x grid, track the running minimum of q1, and take the
    first grid point where it drops to t; the root then sits between that
    point and its predecessor, where it is polished by bisection.
    """

    def __init__(self, layer: LayerSpec, grid_points: int = GRID_POINTS):
        self.layer = layer
        self.xs = composite_grid(grid_points)[::-1]
        self.qs = q_layer(layer, self.xs)
        self.run_min = np.minimum.accumulate(self.qs)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        # -run_min is non-decreasing along the descending grid
        idx = np.searchsorted(-self.run_min, -t, side="left")
        out = np.full(t.shape, np.nan)
        at_top = t >= self.qs[0]
        out[at_top] = 1.0
        ok = (~at_top) & (idx < len(self.xs))
        if not ok.any():
            return out
        i = idx[ok]
        hi = self.xs[i - 1].copy()
        lo = self.xs[i].copy()
        tt = t[ok]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            above = q_layer(self.layer, mid) > tt
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.all(hi - lo <= ROOT_TOL * np.maximum(hi, 1e-300)):
                break
        out[ok] = 0.5 * (lo + hi)
        return out


def q_of_y(e: Ensemble, y: float, _inv: _QInverse | None = None) -> float:
    """max{x : q1(x) = q2(y)}; requires q2(y) <= 1."""
    if e.L != 2:
        raise ValueError("q_of_y needs a bilayer ensemble")
    t = q2(e, y)
    if t > 1.0:
        raise DomainError(f"q2({y}) = {t} > 1; q(y) is undefined")
    inv = _inv or _QInverse(e.layers[0])
    return float(inv(t)[0])


def _bilayer_objective(e: Ensemble, inv: _QInverse, y):
    """y / g(1, q(y), y) with infeasible y (q2(y) > 1) mapped to +inf."""
    l1, l2 = e.layers
    y = np.atleast_1d(np.asarray(y, dtype=float))
    t = q_layer(l2, y)
    t = np.atleast_1d(t)
    feas = np.isfinite(t) & (t <= 1.0)
    out = np.full(y.shape, np.inf)
    if feas.any():
        # a root below the grid floor is treated as q(y) = 0, where g vanishes
        x = np.nan_to_num(inv(t[feas]), nan=0.0)
        u1 = complement_eval(l1.rho, np.clip(x, 0.0, 1.0))
        u2 = complement_eval(l2.rho, y[feas])
        g = horner(l1.Lam.exponent_coeffs, u1) * horner(l2.lam.exponent_coeffs, u2)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(g > 0, y[feas] / np.where(g > 0, g, 1.0), np.inf)
        out[feas] = val
    return out


def threshold_bilayer(e: Ensemble, grid_points: int = GRID_POINTS) -> ThresholdReport:
    """Closed-form bilayer threshold via the q-function infimum."""
    if e.L != 2:
        raise ValueError("threshold_bilayer needs a bilayer ensemble")
    l1, l2 = e.layers
    inv = _QInverse(l1, grid_points)
    grid = composite_grid(grid_points)
    vals = _bilayer_objective(e, inv, grid)

    def fun(y):
        return float(_bilayer_objective(e, inv, y)[0])

    first, arg = _polish(fun, grid, vals)
    notes = []
    two_branch = l2.p0 > 0.0 and l2.lam.at_zero() == 0.0
    branches = None
    if two_branch:
        eps1 = threshold_1d(l1.lam, l1.rho, grid_points).epsilon_star
        second = eps1 / l2.p0
        branches = (first, second)
        eps = min(first, second)
    else:
        eps = first
    if not math.isfinite(first):
        notes.append("no feasible y with q2(y) <= 1 on the grid")
        if not two_branch:
            fallback = threshold_multilayer_bisection(e)
            fallback.notes.append("fell back to DE bisection: empty feasible set")
            return fallback
    if eps > 1.0:
        notes.append("objective exceeds 1 everywhere; threshold capped at 1")
        eps = 1.0
    return ThresholdReport(eps, CLOSED_FORM, branch_values=branches, grid_points=len(grid),
                           tolerance=REFINE_RTOL, argmin=arg, notes=notes)


# -- any number of layers ---------------------------------------------------

def threshold_multilayer_bisection(
    e: Ensemble, active_layers: int | None = None, tol: float = BISECTION_TOL,
    de_tol: float = DEFAULT_TOL, max_iters: int = BISECTION_MAX_ITERS,
) -> ThresholdReport:
    """Largest eps at which DE over the first ``active_layers`` layers reaches zero.

    Runs that exhaust ``max_iters`` count as failures, so the result can sit
    slightly below the true value when decay near threshold is very slow.
    """
    active = e.L if active_layers is None else int(active_layers)
    if not 1 <= active <= e.L:
        raise ValueError(f"active_layers must be in [1, {e.L}], got {active}")
    lo, hi = 0.0, 1.0
    if converges_to_zero(e, 1.0, active, de_tol, max_iters):
        return ThresholdReport(1.0, BISECTION, tolerance=0.0)
    steps = 0
    while hi - lo > tol and steps < BISECTION_STEPS:
        mid = 0.5 * (lo + hi)
        if converges_to_zero(e, mid, active, de_tol, max_iters):
            lo = mid
        else:
            hi = mid
        steps += 1
    return ThresholdReport(0.5 * (lo + hi), BISECTION, grid_points=steps, tolerance=hi - lo)


def threshold(e: Ensemble, active_layers: int | None = None) -> ThresholdReport:
    """Dispatch on the number of layers considered."""
    k = e.L if active_layers is None else int(active_layers)
    if not 1 <= k <= e.L:
        raise ValueError(f"active_layers must be in [1, {e.L}], got {k}")
    if k == 1:
        return threshold_1d(e.layers[0].lam, e.layers[0].rho)
    if k == 2:
        return threshold_bilayer(e.prefix(2))
    return threshold_multilayer_bisection(e, k)


# -- stuck point --------------------------------------------------------------

def h_eps(layer: LayerSpec, eps: float, x):
    """Erasure change over one layer-1 iteration: eps * lambda(1 - rho(1 - x)) - x."""
    return eps * horner(layer.lam.exponent_coeffs, complement_eval(layer.rho, x)) - np.asarray(x)


def attenuation(layer: LayerSpec, x: float) -> float:
    """Lambda(1 - rho(1 - x)): the factor a layer hands to the others."""
    return float(horner(layer.Lam.exponent_coeffs, complement_eval(layer.rho, x)))


def stuck_point(layer1: LayerSpec, eps: float, x0: float = 1.0, tol: float = 1e-12,
                eps1_star: float | None = None) -> StuckPoint:
    """Where layer-1-only decoding stalls at channel ``eps``.

    x_s is the limit of x <- eps * lambda(1 - rho(1 - x)) from ``x0`` (any seed
    at or above x_s gives the same limit); it is 0 at or below the layer's
    threshold ``eps1_star`` when that is supplied.
    """
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps must lie in [0, 1], got {eps}")
    if eps1_star is not None and eps <= eps1_star:
        x_s = 0.0
    else:
        x_s, _ = iterate_1d(layer1, eps, x0=x0, tol=tol)
    a_s = attenuation(layer1, x_s) if x_s > 0 else float(layer1.Lam.at_zero())
    return StuckPoint(float(eps), x_s, a_s)

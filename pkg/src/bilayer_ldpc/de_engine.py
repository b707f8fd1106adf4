"""Density evolution for single-layer, bilayer and L-layer ensembles on the BEC.

All recursions start from the all-ones state.  Layer ``i`` evolves as

    x_i <- eps * lambda_i(u_i) * prod_{j != i} Lambda_j(u_j),   u_j = 1 - rho_j(1 - x_j)

and restricting to the first ``active`` layers drops the remaining factors
(those layers' check nodes are never consulted).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .degree_dist import DomainError, Ensemble, LayerSpec, complement_eval, horner

DEFAULT_TOL = float(os.environ.get("LDPC_DE_TOL", "1e-10"))
DEFAULT_MAX_ITERS = 100_000


class ConvergenceError(RuntimeError):
    """DE exhausted its iteration budget before settling."""


@dataclass(frozen=True)
class DEState:
    x: tuple
    iteration: int

    def __post_init__(self):
        if any(not 0.0 <= v <= 1.0 for v in self.x):
            raise DomainError(f"DE state entries must lie in [0, 1]: {self.x}")
        if self.iteration < -1:
            raise ValueError("iteration index starts at -1")


@dataclass
class DETrace:
    states: list
    epsilon: float
    converged_to_zero: bool
    final: DEState
    tol: float
    max_iters: int
    converged: bool = True
    active_layers: int | None = None

    @property
    def iterations(self) -> int:
        return self.final.iteration + 1

    def as_array(self) -> np.ndarray:
        return np.array([s.x for s in self.states])

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "converged_to_zero": self.converged_to_zero,
            "converged": self.converged,
            "tol": self.tol,
            "max_iters": self.max_iters,
            "rows": [{"iteration": s.iteration, "x": list(s.x)} for s in self.states],
        }


@dataclass(frozen=True)
class Compiled:
    """Padded coefficient arrays handed to the compiled kernels (rho as tail sums)."""

    lam: np.ndarray
    nlam: np.ndarray
    rho: np.ndarray
    nrho: np.ndarray
    Lam: np.ndarray
    nLam: np.ndarray
    L: int

    @property
    def args(self):
        return self.lam, self.nlam, self.rho, self.nrho, self.Lam, self.nLam


def _pad(polys, tails=False):
    cs = [p.tail_coeffs if tails else p.exponent_coeffs for p in polys]
    width = max(len(c) for c in cs)
    arr = np.zeros((len(polys), width))
    n = np.zeros(len(polys), dtype=np.int64)
    for i, c in enumerate(cs):
        arr[i, : len(c)] = c
        n[i] = len(c)
    return arr, n


_cache: dict = {}


def compile_ensemble(e: Ensemble | LayerSpec) -> Compiled:
    if isinstance(e, LayerSpec):
        e = _single(e)
    key = id(e)
    hit = _cache.get(key)
    if hit is not None and hit[0] is e:
        return hit[1]
    layers = e.layers
    lam, nlam = _pad([ly.lam for ly in layers])
    rho, nrho = _pad([ly.rho for ly in layers], tails=True)
    Lam, nLam = _pad([ly.Lam for ly in layers])
    comp = Compiled(lam, nlam, rho, nrho, Lam, nLam, len(layers))
    if len(_cache) > 256:
        _cache.clear()
    _cache[key] = (e, comp)
    return comp


def _single(layer: LayerSpec):
    # bypasses Ensemble validation: a lone layer-2 pair may carry p0 > 0 or degree-1 nodes
    obj = object.__new__(Ensemble)
    object.__setattr__(obj, "layers", (layer,))
    return obj


def _check_eps(eps):
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"erasure probability must lie in [0, 1], got {eps}")


def de_step(e: Ensemble, eps: float, s: DEState, active_layers: int | None = None) -> DEState:
    """One flooding DE iteration for all (or the first ``active_layers``) layers."""
    _check_eps(eps)
    L = e.L
    if len(s.x) != L:
        raise ValueError(f"state has {len(s.x)} entries, ensemble has {L} layers")
    active = L if active_layers is None else active_layers
    us = [complement_eval(ly.rho, xi) for ly, xi in zip(e.layers[:active], s.x)]
    Lv = [horner(ly.Lam.exponent_coeffs, u) for ly, u in zip(e.layers, us)]
    out = []
    for i in range(L):
        if i >= active:
            out.append(1.0)
            continue
        p = eps * horner(e.layers[i].lam.exponent_coeffs, us[i])
        for j in range(active):
            if j != i:
                p *= Lv[j]
        out.append(min(max(p, 0.0), 1.0))
    return DEState(tuple(out), s.iteration + 1)


def de_step_2d(e: Ensemble, eps: float, s: DEState) -> DEState:
    """Bilayer step: returns (f(eps, x, y), g(eps, x, y))."""
    if e.L != 2:
        raise ValueError("de_step_2d needs a bilayer ensemble")
    return de_step(e, eps, s)


def initial_state(L: int) -> DEState:
    return DEState((1.0,) * L, -1)


def de_run(
    e: Ensemble,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    active_layers: int | None = None,
    record: bool = True,
    strict: bool = False,
    x0=None,
) -> DETrace:
    """Run DE from the all-ones state (or ``x0``) until it settles.

    ``converged_to_zero`` is set when every active entry falls below ``tol``.
    With ``strict`` a run that exhausts ``max_iters`` raises ConvergenceError;
    otherwise the trace comes back with ``converged=False``.
    """
    _check_eps(eps)
    if tol <= 0 or max_iters < 1:
        raise ValueError("need tol > 0 and max_iters >= 1")
    L = e.L
    active = L if active_layers is None else int(active_layers)
    if not 1 <= active <= L:
        raise ValueError(f"active_layers must be in [1, {L}], got {active}")
    comp = compile_ensemble(e)
    start = np.ones(L) if x0 is None else np.array(x0, dtype=float)
    buf = np.empty((max_iters + 1 if record else 0, L))
    x, it, status, n_rec = _kernels.de_iterate(
        *comp.args, float(eps), start, active, float(tol), int(max_iters), buf
    )
    if strict and status == _kernels.BUDGET:
        raise ConvergenceError(
            f"DE did not settle within {max_iters} iterations at eps={eps} (x={x.tolist()})"
        )
    final = DEState(tuple(float(v) for v in x), it - 1)
    if record:
        states = [DEState(tuple(float(v) for v in buf[k]), k - 1) for k in range(n_rec)]
    else:
        states = []
    return DETrace(
        states=states,
        epsilon=float(eps),
        converged_to_zero=status == _kernels.ZERO,
        final=final,
        tol=tol,
        max_iters=max_iters,
        converged=status != _kernels.BUDGET,
        active_layers=active,
    )


def largest_partial_fixed_point(
    e: Ensemble, eps: float, active_layers: int, tol: float = DEFAULT_TOL,
    max_iters: int = 10 * DEFAULT_MAX_ITERS,
) -> np.ndarray:
    """Largest fixed point of the first ``active_layers`` recursions, others idle.

    DE from all-ones decreases monotonically to this point.
    """
    tr = de_run(e, eps, tol=tol, max_iters=max_iters, active_layers=active_layers,
                record=False, strict=True)
    x = np.array(tr.final.x[:active_layers])
    if tr.converged_to_zero:
        x[:] = 0.0
    return x


def converges_to_zero(e: Ensemble, eps: float, active_layers: int | None = None,
                      tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> bool:
    return de_run(e, eps, tol=tol, max_iters=max_iters, active_layers=active_layers,
                  record=False).converged_to_zero


def iterate_1d(layer: LayerSpec, eps: float, x0: float = 1.0, tol: float = 1e-12,
               max_iters: int = 10 * DEFAULT_MAX_ITERS) -> tuple[float, bool]:
    """Single-layer recursion x <- eps * lambda(1 - rho(1 - x)) seeded at ``x0``.

    Returns (limit, reached_zero).  Only lambda and rho of ``layer`` are used.
    """
    comp = compile_ensemble(layer)
    x, it, status, _ = _kernels.de_iterate(
        *comp.args, float(eps), np.array([float(x0)]), 1, float(tol), int(max_iters),
        np.empty((0, 1)),
    )
    if status == _kernels.BUDGET:
        raise ConvergenceError(f"1D recursion did not settle at eps={eps}")
    if status == _kernels.ZERO:
        return 0.0, True
    return float(x[0]), False

"""Scheduling the costly layer-2 iterations of a bilayer decoder.

Layer-1 iterations are free; every layer-2 update costs one unit.  Seen from
layer 1, layer 2 only rescales the channel: with layer-2 erasure y the
effective erasure is eps * Lambda2(1 - rho2(1 - y)).  Once that drops below
the layer-1 threshold, layer 1 finishes on its own.

The cheapest schedule lets layer 1 run until it is stuck and only then
refreshes layer 2.  ``schedule_analytic`` follows that recursion exactly using
stuck points; ``schedule_simulate`` runs the eta-triggered decoder (and
forced-period variants) iteration by iteration.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .construct import gap_report, tornado_bilayer, FULL_EPS2
from .de_engine import compile_ensemble
from .degree_dist import DomainError, Ensemble, complement_eval, horner
from .threshold import attenuation, stuck_point, threshold_1d

ANALYTIC = "analytic"
SIMULATED = "simulated"
STALL_WINDOW = 10
STALL_RTOL = 1e-12
MAX_UPDATES = 1_000_000
PHASE_BUDGET = 1_000_000
DEFAULT_D2_GRID = (1, 2, 3, 5, 10, 20, 35, 50, 100, 200, 400, 800)


class InvalidRegimeError(RuntimeError):
    """The effective erasure stopped decreasing: eps is at or above the bilayer threshold."""


class ScheduleBudgetError(RuntimeError):
    """The simulator ran out of iterations before deciding."""


@dataclass
class ScheduleTrace:
    """Layer-2 updates of one decoding run.

    Row k (1-based) is (k, eps_k, x_k, y_k): the effective erasure after the
    k-th layer-2 update, the layer-1 erasure tied to it, and the layer-2
    erasure produced by the update.  In analytic traces x_k is the layer-1
    stuck point at eps_k; in simulated traces it is the layer-1 erasure at the
    moment the update fired.  ``initial`` holds (eps, x_s(eps), 1).
    """

    updates: list
    n2: int
    eps: float
    mode: str
    eta: float | None = None
    layer1_threshold: float | None = None
    initial: tuple | None = None
    iterations: int | None = None
    every: int | None = None

    def __post_init__(self):
        if self.n2 < 0:
            raise ValueError("n2 must be non-negative")

    @property
    def eps_k(self) -> list:
        return [u[1] for u in self.updates]

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "mode": self.mode,
            "eta": self.eta,
            "every": self.every,
            "n2": self.n2,
            "layer1_threshold": self.layer1_threshold,
            "initial": None if self.initial is None else list(self.initial),
            "iterations": self.iterations,
            "updates": [{"k": k, "eps_k": ek, "x": x, "y": y} for k, ek, x, y in self.updates],
        }


def _check_bilayer(e: Ensemble):
    if e.L != 2:
        raise ValueError("scheduling is defined for bilayer ensembles")


def eps_eff(e: Ensemble, eps: float, y: float) -> float:
    """Channel erasure as seen by layer 1 when layer 2 sits at erasure ``y``."""
    _check_bilayer(e)
    if not (0.0 <= eps <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"eps and y must lie in [0, 1], got {eps}, {y}")
    return eps * attenuation(e.layers[1], y)


def _g(e: Ensemble, eps: float, x: float, y: float) -> float:
    l1, l2 = e.layers
    return eps * attenuation(l1, x) * float(
        horner(l2.lam.exponent_coeffs, complement_eval(l2.rho, y)))


def _layer1_threshold(e, eps1_star):
    if eps1_star is not None:
        return float(eps1_star)
    l1 = e.layers[0]
    return threshold_1d(l1.lam, l1.rho).epsilon_star


def schedule_analytic(e: Ensemble, eps: float, eps1_star: float | None = None,
                      tol: float = 1e-12, max_updates: int = MAX_UPDATES) -> ScheduleTrace:
    """Stuck-point recursion: refresh layer 2 only when layer 1 cannot move.

    Starting from y = 1 and x = x_s(eps), each update sets y <- g(eps, x, y),
    eps_k <- eps_eff(y) and x <- x_s(eps_k), until eps_k falls below the
    layer-1 threshold.  Raises InvalidRegimeError if eps_k stalls.
    """
    _check_bilayer(e)
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must lie in (0, 1], got {eps}")
    eps1 = _layer1_threshold(e, eps1_star)
    l1 = e.layers[0]
    if eps <= eps1:
        return ScheduleTrace([], 0, eps, ANALYTIC, layer1_threshold=eps1,
                             initial=(eps, 0.0, 1.0))
    x = stuck_point(l1, eps, tol=tol).x_s
    y = 1.0
    initial = (eps, x, y)
    updates = []
    history = [eps]
    k = 0
    while True:
        k += 1
        y = _g(e, eps, x, y)
        ek = eps_eff(e, eps, y)
        if ek < eps1:
            updates.append((k, ek, 0.0, y))
            break
        x = stuck_point(l1, ek, x0=x, tol=tol).x_s
        updates.append((k, ek, x, y))
        history.append(ek)
        if len(history) > STALL_WINDOW:
            old = history[-STALL_WINDOW - 1]
            if old - ek <= STALL_RTOL * old:
                raise InvalidRegimeError(
                    f"effective erasure stalled at {ek:.12g} >= {eps1:.12g} after {k} updates; "
                    f"eps={eps} is not below the bilayer threshold")
        if k >= max_updates:
            raise InvalidRegimeError(f"no convergence within {max_updates} updates at eps={eps}")
    return ScheduleTrace(updates, len(updates), eps, ANALYTIC, layer1_threshold=eps1,
                         initial=initial)


def schedule_simulate(e: Ensemble, eps: float, eta: float | None = 1e-4, every: int = 0,
                      eps1_star: float | None = None, tol: float = 1e-12,
                      phase_budget: int = PHASE_BUDGET,
                      max_updates: int = 100_000) -> ScheduleTrace:
    """Run the bilayer decoder with layer 2 refreshed on a trigger.

    With ``every == 0`` layer 2 is updated when the last layer-1 step moved by
    at most ``eta`` and the effective erasure is still >= the layer-1
    threshold.  With ``every = k > 0`` it is updated on every k-th iteration
    regardless (k = 1 is flooding).
    """
    _check_bilayer(e)
    if every < 0:
        raise ValueError("every must be >= 0")
    if every == 0 and (eta is None or eta <= 0):
        raise ValueError("eta must be positive")
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must lie in (0, 1], got {eps}")
    eps1 = _layer1_threshold(e, eps1_star)
    if eps <= eps1:
        return ScheduleTrace([], 0, eps, SIMULATED, eta=eta, layer1_threshold=eps1,
                             initial=(eps, 1.0, 1.0), iterations=0, every=every or None)
    comp = compile_ensemble(e)
    rec = np.zeros((max_updates, 3))
    n2, status, x, y, it = _kernels.schedule_run(
        *comp.args, float(eps), float(eta or 0.0), int(every), float(eps1), float(tol),
        int(phase_budget), int(max_updates), rec)
    if status == 1:
        raise InvalidRegimeError(
            f"decoder reached a fixed point with effective erasure >= {eps1:.6g} at eps={eps}")
    if status == 2:
        raise ScheduleBudgetError(
            f"budget exhausted after {it} iterations and {n2} layer-2 updates at eps={eps}")
    updates = [(k + 1, float(rec[k, 0]), float(rec[k, 1]), float(rec[k, 2])) for k in range(n2)]
    return ScheduleTrace(updates, n2, eps, SIMULATED, eta=eta, layer1_threshold=eps1,
                         initial=(eps, 1.0, 1.0), iterations=int(it), every=every or None)


def is_valid_schedule(trace: ScheduleTrace, layer1_threshold: float) -> bool:
    """A schedule decodes iff the effective erasure eventually drops below the layer-1 threshold."""
    if trace.eps <= layer1_threshold:
        return True
    return any(ek < layer1_threshold for _, ek, _, _ in trace.updates)


# -- sweeps -------------------------------------------------------------------

SWEEP_FIELDS = ("delta1", "delta2", "rate", "n2", "eps", "mode", "error")


def _sweep_row(args):
    D1, D2, eps1, eps2, eps_fraction, mode, eta = args
    row = dict.fromkeys(SWEEP_FIELDS, None)
    row["mode"] = mode
    row["eps"] = eps_fraction * eps2
    try:
        d = tornado_bilayer(D1, D2, eps1, eps2, FULL_EPS2)
        gr = gap_report(d)
        row["delta1"], row["delta2"] = gr.per_layer_gaps
        row["rate"] = d.rate
        if mode == ANALYTIC:
            tr = schedule_analytic(d.ensemble, row["eps"], eps1_star=d.component_thresholds[0])
        else:
            tr = schedule_simulate(d.ensemble, row["eps"], eta=eta,
                                   eps1_star=d.component_thresholds[0])
        row["n2"] = tr.n2
    except Exception as exc:  # recorded per row; the sweep goes on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def n2_sweep(grid, eps_fraction: float = 0.999, eps1: float = 0.05, eps2: float = 0.2,
             mode: str = ANALYTIC, eta: float = 1e-4, jobs: int = 1) -> list:
    """N2 over a grid of (D1, D2) Tornado bilayers at eps = eps_fraction * eps2.

    Returns one dict per grid point, in grid order, with the component gaps
    delta1 and delta2, the design rate and N2.  Failures land in ``error``.
    """
    if not 0.0 < eps_fraction < 1.0:
        raise ValueError(f"eps_fraction must lie in (0, 1), got {eps_fraction}")
    if mode not in (ANALYTIC, SIMULATED):
        raise ValueError(f"mode must be {ANALYTIC!r} or {SIMULATED!r}")
    tasks = [(int(D1), int(D2), eps1, eps2, eps_fraction, mode, eta) for D1, D2 in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_row, tasks))
    return [_sweep_row(t) for t in tasks]


def delta1_to_d1(delta1: float, eps1: float = 0.05) -> int:
    """Tornado depth whose layer gap is about ``delta1`` (the gap is close to eps1 / D1)."""
    if delta1 <= 0:
        raise ValueError("delta1 must be positive")
    return max(1, int(round(eps1 / delta1)))

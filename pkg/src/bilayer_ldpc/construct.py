"""Building layered ensembles that hit prescribed threshold tuples.

A *family* is any callable mapping a requested single-layer threshold to an
edge-perspective pair (lambda, rho) whose BP threshold is that value.  The
builders below stack such pairs: layer 1 is designed for eps_1, and each
later layer i+1 for eps_{i+1} times the attenuation the earlier layers leave
behind when they get stuck at eps_{i+1}.  P0 of layer i+1 is eps_i / eps_{i+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import poisson

from .de_engine import largest_partial_fixed_point
from .degree_dist import (
    DegreePoly,
    Ensemble,
    LayerSpec,
    complement_eval,
    design_rate,
    horner,
    integral01,
)
from .threshold import threshold_1d

GENERATOR_TOL = 1e-3
DEFAULT_TAIL = 1e-12
EXACT_AS = "exact_as"
FULL_EPS2 = "full_eps2"
MODES = (EXACT_AS, FULL_EPS2)


class DesignError(ValueError):
    """A component pair or the assembled design misses its target."""


@dataclass(frozen=True)
class DesignTargets:
    thresholds: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "thresholds", t)
        if not t:
            raise ValueError("need at least one target threshold")
        if any(not 0.0 < v < 1.0 for v in t):
            raise ValueError(f"targets must lie in (0, 1): {t}")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError(f"targets must be strictly increasing: {t}")

    @property
    def L(self) -> int:
        return len(self.thresholds)

    def __getitem__(self, i):
        return self.thresholds[i]


# -- component families -----------------------------------------------------

def harmonic(D: int) -> float:
    return math.fsum(1.0 / i for i in range(1, D + 1))


def poisson_rho(alpha: float, tail_tol: float = DEFAULT_TAIL) -> DegreePoly:
    """exp(alpha (x - 1)) truncated where the dropped mass falls below ``tail_tol``.

    The x**j term is degree j + 1; the kept coefficients are renormalized.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    n = int(poisson.isf(tail_tol, alpha))
    while poisson.sf(n, alpha) >= tail_tol:
        n += 1
    while n > 0 and poisson.sf(n - 1, alpha) < tail_tol:
        n -= 1
    pmf = poisson.pmf(np.arange(n + 1), alpha)
    pmf = pmf / math.fsum(pmf)
    return DegreePoly.from_exponents(pmf.tolist())


@dataclass(frozen=True)
class TornadoParams:
    D: int
    eps: float
    tail_tol: float = DEFAULT_TAIL

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"D must be a positive integer, got {self.D}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0.0 < self.tail_tol < 1e-6:
            raise ValueError(f"tail_tol must lie in (0, 1e-6), got {self.tail_tol}")

    @property
    def alpha(self) -> float:
        return harmonic(self.D) / self.eps


def tornado_lambda(D: int) -> DegreePoly:
    """(1/H(D)) sum_{i=1}^{D} x**i / i."""
    h = harmonic(D)
    return DegreePoly.edge({i + 1: 1.0 / (h * i) for i in range(1, D + 1)})


def tornado_layer(p: TornadoParams) -> tuple[DegreePoly, DegreePoly]:
    """Heavy-tail/Poisson pair with threshold ``p.eps`` (attained as x -> 0)."""
    return tornado_lambda(p.D), poisson_rho(p.alpha, p.tail_tol)


@dataclass(frozen=True)
class TornadoFamily:
    D: int
    tail_tol: float = DEFAULT_TAIL

    def __call__(self, eps: float):
        return tornado_layer(TornadoParams(self.D, eps, self.tail_tol))

    def describe(self) -> dict:
        return {"family": "tornado", "D": self.D, "tail_tol": self.tail_tol}


@dataclass(frozen=True)
class PoissonCheckFamily:
    """Fixed lambda with Poisson checks; alpha scales the threshold as c / alpha.

    For rho = exp(alpha (x - 1)) the threshold is (1/alpha) inf_y y / lambda(1 - e^{-y}),
    so alpha = c / eps with c that infimum.
    """

    lam: DegreePoly
    tail_tol: float = DEFAULT_TAIL

    def __post_init__(self):
        if self.lam.coeffs.get(1, 0.0) > 0.0:
            raise ValueError("lambda with degree-1 mass has no positive threshold")

    @property
    def c(self) -> float:
        ys = np.geomspace(1e-9, 1e3, 8192)
        vals = ys / horner(self.lam.exponent_coeffs, -np.expm1(-ys))
        i = int(np.argmin(vals))
        lim = math.inf
        l2 = self.lam.coeffs.get(2, 0.0)
        if l2 > 0:
            lim = 1.0 / l2
        if i == 0:
            return min(lim, float(vals[0]))
        res = minimize_scalar(lambda y: y / horner(self.lam.exponent_coeffs, -math.expm1(-y)),
                              bounds=(ys[i - 1], ys[min(i + 1, len(ys) - 1)]), method="bounded",
                              options={"xatol": 1e-12})
        return min(lim, float(res.fun), float(vals[i]))

    def __call__(self, eps: float):
        if not 0.0 < eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {eps}")
        return self.lam, poisson_rho(self.c / eps, self.tail_tol)

    def describe(self) -> dict:
        return {"family": "poisson", "lambda": self.lam.to_wire(), "tail_tol": self.tail_tol}


@dataclass(frozen=True)
class LowDegreeFamily:
    """lambda = x with checks of degree 2 to 4; threshold 1 / (1 + rho_3 + 2 rho_4).

    Covers eps in [1/3, 1).  Above 1/2 only degrees 2 and 3 are used,
    below it only degrees 3 and 4.
    """

    def __call__(self, eps: float):
        if not 1.0 / 3.0 <= eps < 1.0:
            raise ValueError(f"low-degree family covers eps in [1/3, 1), got {eps}")
        s = 1.0 / eps - 1.0
        if s <= 1.0:
            rho = {2: 1.0 - s, 3: s}
        else:
            r4 = min(s - 1.0, 1.0)
            rho = {3: 1.0 - r4, 4: r4}
        return DegreePoly.edge({2: 1.0}), DegreePoly.edge(rho)

    def describe(self) -> dict:
        return {"family": "low_degree"}


def low_degree_stuck_point(rho3: float, rho4: float, eps: float) -> float:
    """Closed-form x_s for lambda = x, rho = rho2 x + rho3 x^2 + rho4 x^3."""
    s = 1.0 / eps - 1.0
    if rho4 == 0.0:
        return 1.0 - s / rho3
    disc = (rho3 + rho4) ** 2 + 4.0 * rho4 * s
    return (rho3 + 3.0 * rho4 - math.sqrt(disc)) / (2.0 * rho4)


def _describe(fam) -> dict:
    if hasattr(fam, "describe"):
        return fam.describe()
    return {"family": getattr(fam, "__name__", type(fam).__name__)}


def make_component(family, eps: float, tol: float = GENERATOR_TOL):
    """Call ``family(eps)`` and check the resulting pair's threshold."""
    lam, rho = family(eps)
    got = threshold_1d(lam, rho).epsilon_star
    if abs(got - eps) > tol:
        raise DesignError(f"{_describe(family)} gave threshold {got:.6g} for target {eps:.6g}")
    return lam, rho, got


# -- constructions ----------------------------------------------------------

@dataclass
class Design:
    ensemble: Ensemble
    targets: DesignTargets
    component_targets: list
    component_thresholds: list
    stuck_points: list
    attenuations: list
    mode: str
    families: list = field(default_factory=list)

    @property
    def p0s(self) -> list:
        return [ly.p0 for ly in self.ensemble.layers]

    @property
    def rate(self) -> float:
        return design_rate(self.ensemble)

    def provenance(self) -> dict:
        return {
            "targets": list(self.targets.thresholds),
            "mode": self.mode,
            "families": self.families,
            "component_targets": self.component_targets,
            "component_thresholds": self.component_thresholds,
            "stuck_points": self.stuck_points,
            "attenuations": self.attenuations,
            "p0": self.p0s,
            "rate": self.rate,
        }


def _as_family(spec):
    """Accept a generator or a fixed (lambda, rho) pair."""
    if callable(spec):
        return spec
    lam, rho = spec

    def fixed(eps):
        return lam, rho

    fixed.describe = lambda: {"family": "fixed", "lambda": lam.to_wire(), "rho": rho.to_wire()}
    return fixed


def construct_multilayer(targets, families, mode: str = EXACT_AS,
                         tol: float = GENERATOR_TOL, fp_tol: float = 1e-12) -> Design:
    """Stack layers so that the first i layers have threshold eps_i for every i.

    ``families`` holds one generator per layer (or a fixed (lambda, rho) pair
    for layer 1).  ``mode`` picks the design target for layers beyond the first:
    eps_{i+1} * a_s (``exact_as``) or the full eps_{i+1} (``full_eps2``).
    """
    if not isinstance(targets, DesignTargets):
        targets = DesignTargets(tuple(targets))
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if len(families) != targets.L:
        raise ValueError(f"need {targets.L} families, got {len(families)}")
    fams = [_as_family(f) for f in families]
    eps = targets.thresholds

    lam, rho, got = make_component(fams[0], eps[0], tol)
    layers = [LayerSpec(lam, rho, 0.0)]
    comp_targets, comp_got = [eps[0]], [got]
    stuck, atten = [], []
    for i in range(1, targets.L):
        prefix = Ensemble(tuple(layers))
        xs = largest_partial_fixed_point(prefix, eps[i], i, tol=fp_tol)
        a = math.prod(
            float(horner(ly.Lam.exponent_coeffs, complement_eval(ly.rho, float(x))))
            for ly, x in zip(layers, xs)
        )
        stuck.append([float(v) for v in xs])
        atten.append(a)
        t = eps[i] * a if mode == EXACT_AS else eps[i]
        lam, rho, got = make_component(fams[i], t, tol)
        layers.append(LayerSpec(lam, rho, eps[i - 1] / eps[i]))
        comp_targets.append(t)
        comp_got.append(got)
    return Design(Ensemble(tuple(layers)), targets, comp_targets, comp_got, stuck, atten,
                  mode, [_describe(f) for f in fams])


def construct_bilayer(targets, layer1, layer2_family, mode: str = EXACT_AS,
                      tol: float = GENERATOR_TOL) -> Design:
    """Two-layer special case: layer 2 designed for eps_2 * a_s(eps_2) (or eps_2)."""
    if not isinstance(targets, DesignTargets):
        targets = DesignTargets(tuple(targets))
    if targets.L != 2:
        raise ValueError("construct_bilayer needs exactly two targets")
    return construct_multilayer(targets, [layer1, layer2_family], mode, tol)


def tornado_bilayer(D1: int, D2: int, eps1: float = 0.05, eps2: float = 0.2,
                    mode: str = FULL_EPS2) -> Design:
    """The two-Tornado bilayer used for the rate and N2 sweeps."""
    return construct_bilayer((eps1, eps2), TornadoFamily(D1), TornadoFamily(D2), mode)


# -- gap accounting ---------------------------------------------------------

@dataclass
class GapReport:
    per_layer_gaps: list
    p0s: list
    bound: float
    actual_gap: float

    def __post_init__(self):
        if any(d < -1e-9 for d in self.per_layer_gaps):
            raise ValueError(f"negative component gap: {self.per_layer_gaps}")

    @property
    def holds(self) -> bool:
        return self.actual_gap <= self.bound + 1e-9

    def to_dict(self) -> dict:
        return {"per_layer_gaps": self.per_layer_gaps, "p0s": self.p0s,
                "bound": self.bound, "actual_gap": self.actual_gap}


def single_layer_rate(ly: LayerSpec) -> float:
    return 1.0 - integral01(ly.rho) / integral01(ly.lam)


def gap_report(design: Design | Ensemble, targets=None, component_thresholds=None) -> GapReport:
    """Component gaps 1 - eps_i - R_i and the weighted bound sum_i delta_i (1 - P0_i).

    Component thresholds default to the targets the layers were designed for.
    """
    if isinstance(design, Design):
        e = design.ensemble
        targets = design.targets if targets is None else targets
        comp = design.component_targets if component_thresholds is None else component_thresholds
    else:
        e = design
        if component_thresholds is None:
            raise ValueError("a bare ensemble needs its component thresholds")
        comp = component_thresholds
    if not isinstance(targets, DesignTargets):
        targets = DesignTargets(tuple(targets))
    deltas = [1.0 - c - single_layer_rate(ly) for c, ly in zip(comp, e.layers)]
    p0s = [ly.p0 for ly in e.layers]
    bound = math.fsum(d * (1.0 - p) for d, p in zip(deltas, p0s))
    actual = 1.0 - targets.thresholds[-1] - design_rate(e)
    return GapReport(deltas, p0s, bound, actual)


# -- edge-count comparison ----------------------------------------------------

@dataclass(frozen=True)
class DegreeComparison:
    d1: float
    d2: float
    d: float

    @property
    def layer1_saving(self) -> float:
        """Relative drop in average variable degree when only layer 1 is decoded."""
        return 1.0 - self.d1 / self.d

    @property
    def both_layers_increase(self) -> float:
        """Relative rise in average variable degree when both layers are decoded."""
        return (self.d1 + self.d2) / self.d - 1.0


def tornado_average_degree(D: int) -> Fraction:
    """Exact 1 / int_0^1 lambda for the Tornado lambda: H(D) (D + 1) / D."""
    h = sum((Fraction(1, i) for i in range(1, D + 1)), Fraction(0))
    return h * (D + 1) / D


def degree_comparison(e: Ensemble) -> DegreeComparison:
    """Bilayer code versus a single-layer code built from layer 2 alone."""
    l1, l2 = e.layers[0], e.layers[1]
    d1 = 1.0 / integral01(l1.lam)
    d = 1.0 / integral01(l2.lam)
    return DegreeComparison(d1, (1.0 - l2.p0) * d, d)

"""Degree-distribution polynomials and layered ensembles.

A ``DegreePoly`` stores coefficients sparsely, keyed by degree.  The exponent
convention depends on the perspective:

* node perspective:  Lambda(x) = sum_i Lambda_i x**i
* edge perspective:  lambda(x) = sum_i lambda_i x**(i - 1)

so the same container holds Lambda, lambda, Omega and rho.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

NORM_TOL = 1e-12
RENORM_TOL = 1e-9

EDGE = "edge"
NODE = "node"


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class SchemaError(ValueError):
    """Malformed ensemble description; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def horner(coeffs, x):
    """Evaluate sum_k coeffs[k] * x**k; works on floats and numpy arrays."""
    r = 0.0
    for c in reversed(coeffs):
        r = r * x + c
    return r


@dataclass(frozen=True)
class DegreePoly:
    coeffs: Mapping[int, float]
    perspective: str = EDGE
    _dense: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.perspective not in (EDGE, NODE):
            raise ValueError(f"unknown perspective {self.perspective!r}")
        clean = {}
        for deg, c in self.coeffs.items():
            deg = int(deg)
            c = float(c)
            if deg < 0:
                raise ValueError(f"negative degree {deg}")
            if not math.isfinite(c) or c < 0.0:
                raise ValueError(f"coefficient of degree {deg} must be finite and >= 0, got {c}")
            if self.perspective == EDGE and deg == 0 and c > 0.0:
                raise ValueError("edge-perspective polynomial cannot have a degree-0 term")
            if c > 0.0:
                clean[deg] = clean.get(deg, 0.0) + c
        total = math.fsum(clean.values())
        if abs(total - 1.0) > RENORM_TOL:
            raise ValueError(f"coefficients sum to {total!r}, not 1")
        if abs(total - 1.0) > NORM_TOL:
            clean = {d: c / total for d, c in clean.items()}
        clean = dict(sorted(clean.items()))
        object.__setattr__(self, "coeffs", clean)
        shift = 1 if self.perspective == EDGE else 0
        top = max(clean) - shift if clean else 0
        dense = [0.0] * (top + 1)
        for d, c in clean.items():
            dense[d - shift] = c
        object.__setattr__(self, "_dense", tuple(dense))

    @classmethod
    def edge(cls, coeffs: Mapping[int, float]) -> "DegreePoly":
        return cls(coeffs, EDGE)

    @classmethod
    def node(cls, coeffs: Mapping[int, float]) -> "DegreePoly":
        return cls(coeffs, NODE)

    @classmethod
    def from_exponents(cls, coeffs: Iterable[float], perspective: str = EDGE) -> "DegreePoly":
        """Build from a dense list indexed by *exponent* (``[a0, a1, ...]`` for a0 + a1 x + ...)."""
        shift = 1 if perspective == EDGE else 0
        return cls({k + shift: c for k, c in enumerate(coeffs) if c != 0.0}, perspective)

    @property
    def exponent_coeffs(self) -> tuple:
        """Dense coefficients indexed by exponent, lowest first."""
        return self._dense

    @property
    def tail_coeffs(self) -> tuple:
        """T_j = sum of exponent coefficients above j, so 1 - p(1 - x) = x * sum_j T_j (1 - x)**j."""
        c = self._dense
        out = [0.0] * max(len(c) - 1, 1)
        acc = 0.0
        for j in range(len(c) - 1, 0, -1):
            acc += c[j]
            out[j - 1] = acc
        return tuple(out)

    @property
    def max_degree(self) -> int:
        return max(self.coeffs) if self.coeffs else 0

    def __hash__(self):
        return hash((self.perspective, tuple(self.coeffs.items())))

    def __call__(self, x):
        return evaluate(self, x)

    def at_zero(self) -> float:
        return self._dense[0]

    def derivative_at_one(self) -> float:
        return math.fsum(k * c for k, c in enumerate(self._dense))

    def to_wire(self) -> dict:
        return {str(d): c for d, c in self.coeffs.items()}


def evaluate(p: DegreePoly, x):
    """Value of ``p`` at ``x`` in [0, 1] (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if arr.size and (np.any(~(arr >= 0.0)) or np.any(arr > 1.0)):
        raise DomainError(f"polynomial argument outside [0, 1]: {x!r}")
    return horner(p.exponent_coeffs, x if arr.ndim else float(arr))


def complement_eval(p: DegreePoly, x):
    """1 - p(1 - x), evaluated as x * T(1 - x) with nonnegative tail sums T.

    Avoids the cancellation in 1 - p(1 - x) for small x.
    """
    arr = np.asarray(x, dtype=float)
    if arr.size and (np.any(~(arr >= 0.0)) or np.any(arr > 1.0)):
        raise DomainError(f"polynomial argument outside [0, 1]: {x!r}")
    out = arr * horner(p.tail_coeffs, 1.0 - arr)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def integral01(p: DegreePoly) -> float:
    return math.fsum(c / (k + 1) for k, c in enumerate(p.exponent_coeffs))


def edge_to_node(lam: DegreePoly, p0: float = 0.0) -> DegreePoly:
    """Node-perspective Lambda with Lambda(0) = p0 and Lambda_i proportional to lambda_i / i."""
    if lam.perspective != EDGE:
        raise ValueError("edge_to_node expects an edge-perspective polynomial")
    if not 0.0 <= p0 <= 1.0:
        raise DomainError(f"p0 must lie in [0, 1], got {p0}")
    w = {d: c / d for d, c in lam.coeffs.items()}
    s = math.fsum(w.values())
    out = {d: (1.0 - p0) * v / s for d, v in w.items()}
    if p0 > 0.0:
        out[0] = p0
    return DegreePoly(out, NODE)


def node_to_edge(Lam: DegreePoly) -> tuple[DegreePoly, float]:
    """Inverse of :func:`edge_to_node`; returns ``(lambda, p0)``."""
    if Lam.perspective != NODE:
        raise ValueError("node_to_edge expects a node-perspective polynomial")
    p0 = Lam.coeffs.get(0, 0.0)
    w = {d: d * c for d, c in Lam.coeffs.items() if d > 0}
    if not w:
        raise ValueError("node polynomial has no nodes of positive degree")
    s = math.fsum(w.values())
    return DegreePoly({d: v / s for d, v in w.items()}, EDGE), p0


@dataclass(frozen=True)
class LayerSpec:
    lam: DegreePoly
    rho: DegreePoly
    p0: float = 0.0

    def __post_init__(self):
        if self.lam.perspective != EDGE or self.rho.perspective != EDGE:
            raise ValueError("layer polynomials must be edge perspective")
        if not 0.0 <= self.p0 <= 1.0:
            raise DomainError(f"p0 must lie in [0, 1], got {self.p0}")

    @cached_property
    def Lam(self) -> DegreePoly:
        return edge_to_node(self.lam, self.p0)

    def rate_loss(self) -> float:
        """Check-to-variable ratio term of the design rate contributed by this layer."""
        return integral01(self.rho) / integral01(self.lam) * (1.0 - self.p0)


@dataclass(frozen=True)
class Ensemble:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("an ensemble needs at least one layer")
        first = layers[0]
        if first.p0 != 0.0:
            raise ValueError("layer 1 must have p0 = 0")
        if first.lam.coeffs.get(1, 0.0) > 0.0:
            raise ValueError("layer 1 cannot have degree-1 variable nodes")

    @property
    def L(self) -> int:
        return len(self.layers)

    @classmethod
    def bilayer(cls, lam1, rho1, lam2, rho2, p0) -> "Ensemble":
        return cls((LayerSpec(lam1, rho1, 0.0), LayerSpec(lam2, rho2, p0)))

    def prefix(self, i: int) -> "Ensemble":
        return Ensemble(self.layers[:i])

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"lambda": ly.lam.to_wire(), "rho": ly.rho.to_wire(), "p0": ly.p0}
                for ly in self.layers
            ]
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def design_rate(e: Ensemble) -> float:
    return 1.0 - math.fsum(ly.rate_loss() for ly in e.layers)


def parse_poly(obj, path: str) -> DegreePoly:
    if not isinstance(obj, dict) or not obj:
        raise SchemaError(path, "expected a non-empty object mapping degree to coefficient")
    coeffs = {}
    for key, val in obj.items():
        if not isinstance(key, str) or not key.isdigit():
            raise SchemaError(f"{path}.{key}", "degree keys must be decimal strings")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(f"{path}.{key}", "coefficient must be a number")
        coeffs[int(key)] = float(val)
    try:
        return DegreePoly(coeffs, EDGE)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def ensemble_from_dict(doc) -> Ensemble:
    """Validate and parse the wire format; errors carry a field path."""
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise SchemaError("layers", "expected a non-empty list")
    out = []
    for i, ly in enumerate(layers):
        path = f"layers[{i}]"
        if not isinstance(ly, dict):
            raise SchemaError(path, "expected an object")
        for key in ("lambda", "rho", "p0"):
            if key not in ly:
                raise SchemaError(f"{path}.{key}", "missing")
        lam = parse_poly(ly["lambda"], f"{path}.lambda")
        rho = parse_poly(ly["rho"], f"{path}.rho")
        p0 = ly["p0"]
        if isinstance(p0, bool) or not isinstance(p0, (int, float)) or not 0.0 <= p0 <= 1.0:
            raise SchemaError(f"{path}.p0", f"must be a number in [0, 1], got {p0!r}")
        if i == 0:
            if p0 != 0:
                raise SchemaError(f"{path}.p0", "layer 1 must have p0 = 0")
            if lam.coeffs.get(1, 0.0) > 0.0:
                raise SchemaError(f"{path}.lambda.1", "layer 1 cannot have degree-1 variable nodes")
        out.append(LayerSpec(lam, rho, float(p0)))
    return Ensemble(tuple(out))


def ensemble_from_json(text: str) -> Ensemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return ensemble_from_dict(doc)

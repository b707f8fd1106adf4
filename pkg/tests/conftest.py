import numpy as np
import pytest

from bilayer_ldpc.degree_dist import DegreePoly, Ensemble, LayerSpec
from bilayer_ldpc.de_engine import de_run
from bilayer_ldpc.threshold import stuck_point


REF_POLYS = ({2: 1.0}, {10: 1.0}, {2: 0.3396, 5: 0.6604}, {10: 1.0})
REF_P0 = 0.2667


def reference_bilayer():
    """lambda1 = x, rho1 = x^9, lambda2 = 0.3396 x + 0.6604 x^4, rho2 = x^9, P0 = 0.2667."""
    return Ensemble.bilayer(*(DegreePoly.edge(d) for d in REF_POLYS), REF_P0)


def random_edge_poly(rng, max_deg=8, min_deg=1, max_terms=3):
    degs = rng.choice(np.arange(min_deg, max_deg + 1), size=rng.integers(1, max_terms + 1),
                      replace=False)
    w = rng.random(len(degs)) + 0.05
    w = w / w.sum()
    return DegreePoly.edge({int(d): float(c) for d, c in zip(degs, w)})


def random_bilayer(rng, case=None, max_deg=8):
    """Small random bilayer; ``case`` forces P0 = 0, lambda2(0) > 0 or P0 > 0."""
    lam1 = random_edge_poly(rng, max_deg, min_deg=2)
    rho1 = random_edge_poly(rng, max_deg, min_deg=2)
    min2 = 1 if case == "lam2_zero" else 2
    lam2 = random_edge_poly(rng, max_deg, min_deg=min2)
    if case == "lam2_zero" and 1 not in lam2.coeffs:
        c = dict(lam2.coeffs)
        c[1] = 0.3
        s = sum(c.values())
        lam2 = DegreePoly.edge({d: v / s for d, v in c.items()})
    rho2 = random_edge_poly(rng, max_deg, min_deg=2)
    p0 = 0.0 if case in ("p0_zero", "lam2_zero") else float(rng.uniform(0.05, 0.9))
    return Ensemble.bilayer(lam1, rho1, lam2, rho2, p0)


@pytest.fixture
def ref_e():
    return reference_bilayer()


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timing checks measure steady-state work."""
    e = reference_bilayer()
    de_run(e, 0.3)
    de_run(e, 0.3, active_layers=1, record=False)
    stuck_point(LayerSpec(e.layers[0].lam, e.layers[0].rho), 0.2)
    from bilayer_ldpc.schedule import schedule_simulate
    schedule_simulate(e, 0.2)
    yield

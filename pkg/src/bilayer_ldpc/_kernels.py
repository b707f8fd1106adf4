"""Compiled inner loops for density evolution and layer-2 scheduling.

Polynomials arrive as padded 2D arrays indexed ``[layer, exponent]`` with a
per-layer length vector, so one signature covers every ensemble.  Check-side
polynomials are passed as tail sums T so that 1 - rho(1 - x) = x * T(1 - x)
keeps its relative precision when x is tiny.
"""

import numpy as np
from numba import njit

ZERO = 0
STALLED = 1
BUDGET = 2


@njit(cache=True)
def _h(c, n, x):
    r = 0.0
    for k in range(n - 1, -1, -1):
        r = r * x + c[k]
    return r


@njit(cache=True)
def _clip01(v):
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@njit(cache=True)
def _step(lam, nlam, rho, nrho, Lam, nLam, eps, x, active, lv, Lv, out):
    for i in range(active):
        u = _clip01(x[i] * _h(rho[i], nrho[i], 1.0 - x[i]))
        lv[i] = _h(lam[i], nlam[i], u)
        Lv[i] = _h(Lam[i], nLam[i], u)
    for i in range(x.shape[0]):
        if i < active:
            p = eps * lv[i]
            for j in range(active):
                if j != i:
                    p *= Lv[j]
            out[i] = _clip01(p)
        else:
            out[i] = 1.0


@njit(cache=True)
def de_iterate(lam, nlam, rho, nrho, Lam, nLam, eps, x0, active, tol, max_iters, buf):
    """Iterate DE from ``x0``; layers at index >= ``active`` contribute nothing.

    Stops when every active entry drops below ``tol`` (ZERO), when the largest
    entrywise change falls below ``tol`` and the sequence is settling on a
    positive limit (STALLED), or after ``max_iters`` steps (BUDGET).  A small
    step that still extrapolates (Aitken) to a limit near zero keeps iterating.
    ``buf`` receives the states if it has at least one row.
    """
    L = x0.shape[0]
    x = x0.copy()
    nx = np.empty(L)
    lv = np.empty(L)
    Lv = np.empty(L)
    record = buf.shape[0] > 0
    n_rec = 0
    if record:
        buf[0, :] = x
        n_rec = 1
    s_prev = 0.0
    for i in range(active):
        s_prev = max(s_prev, x[i])
    ds_prev = -1.0
    status = BUDGET
    it = 0
    while it < max_iters:
        it += 1
        _step(lam, nlam, rho, nrho, Lam, nLam, eps, x, active, lv, Lv, nx)
        d = 0.0
        s = 0.0
        for i in range(active):
            d = max(d, abs(x[i] - nx[i]))
            s = max(s, nx[i])
            x[i] = nx[i]
        if record and n_rec < buf.shape[0]:
            buf[n_rec, :] = x
            n_rec += 1
        ds = s_prev - s
        s_prev = s
        if s < tol:
            status = ZERO
            break
        if d < tol:
            # a monotone sequence that moves by rounding noise has settled
            if d <= 1e-14 * s or ds < 0.0:
                status = STALLED
                break
            if ds_prev > ds and ds >= 0.0:
                limit = s - ds * ds / (ds_prev - ds)
                if limit > 0.5 * s:
                    status = STALLED
                    break
        ds_prev = ds
    return x, it, status, n_rec


@njit(cache=True)
def schedule_run(lam, nlam, rho, nrho, Lam, nLam, eps, eta, every, eps1, tol,
                 phase_budget, max_updates, rec):
    """Bilayer DE where layer 2 is refreshed only on selected iterations.

    ``every > 0`` forces an update on every ``every``-th iteration; otherwise
    the update fires when the last layer-1 step moved by at most ``eta`` and
    the effective erasure seen by layer 1 is still >= ``eps1``; a step that
    straddles an update does not count.  Ends as soon
    as layer 1 alone must succeed (effective erasure < eps1) or x < tol.

    Returns (n2, status, x, y, iterations) with status 0 success, 1 stalled
    (an update that no longer lowers eps_eff while x is at rest), 2 budget
    exhausted.
    ``rec`` rows hold (eps_eff after update, x used, y after update).
    """
    x = 1.0
    y = 1.0
    x_prev2 = np.inf
    n2 = 0
    phase = 0
    it = 0
    status = 2
    while True:
        u1 = _clip01(x * _h(rho[0], nrho[0], 1.0 - x))
        u2 = _clip01(y * _h(rho[1], nrho[1], 1.0 - y))
        eff = eps * _h(Lam[1], nLam[1], u2)
        xn = eff * _h(lam[0], nlam[0], u1)
        if every > 0:
            upd = (it + 1) % every == 0
        else:
            upd = abs(x_prev2 - x) <= eta and eff >= eps1
        yn = y
        eff_n = eff
        if upd:
            yn = eps * _h(Lam[0], nLam[0], u1) * _h(lam[1], nlam[1], u2)
            u2n = _clip01(yn * _h(rho[1], nrho[1], 1.0 - yn))
            eff_n = eps * _h(Lam[1], nLam[1], u2n)
            if n2 < rec.shape[0]:
                rec[n2, 0] = eff_n
                rec[n2, 1] = x
                rec[n2, 2] = yn
            n2 += 1
            phase = 0
            if eff_n >= eff * (1.0 - 1e-13) and abs(xn - x) <= tol:
                status = 1
                x = xn
                break
        # the trigger only compares layer-1 steps taken after the latest y
        # update; otherwise the step computed from the old y fires it again
        x_prev2 = np.inf if upd else x
        x = xn
        y = yn
        it += 1
        phase += 1
        if x < tol or (eff_n if upd else eff) < eps1:
            status = 0
            break
        if phase > phase_budget or n2 >= max_updates:
            status = 2
            break
    return n2, status, x, y, it

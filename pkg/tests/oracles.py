"""Independent reference implementations used to pin expected values.

Nothing here may import from the solver/prox internals under test beyond
plain objective evaluation; the point is to compute answers a second way.
"""

import numpy as np

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def scalar_prox_objective(y, v, rho, p):
    return rho * np.abs(y) ** p + 0.5 * (y - v) ** 2


def golden_section(fn, lo, hi, iters=90):
    """Minimize a unimodal scalar function on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def prox_lp_brute(v, rho, p, grid_points=4001):
    """Global minimizer of rho|y|^p + (y-v)^2/2 by grid + golden refinement.

    The objective is even under (v, y) -> (-v, -y), so work with |v| and
    restore the sign.  For v >= 0 every minimizer lies in [0, v].
    """
    s = 1.0 if v >= 0 else -1.0
    a = abs(float(v))
    if a == 0.0:
        return 0.0
    grid = np.linspace(0.0, a, grid_points)
    vals = scalar_prox_objective(grid, a, rho, p)
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid_points - 1)]
    y = golden_section(lambda t: scalar_prox_objective(t, a, rho, p), lo, hi)
    # the origin is always a candidate: |y|^p is nonsmooth there and the
    # golden search cannot land on it exactly
    if scalar_prox_objective(0.0, a, rho, p) <= scalar_prox_objective(y, a, rho, p):
        y = 0.0
    return s * y


def conv2d_direct(image, taps, anchor):
    """Circular convolution by explicit roll-and-add, O(H W k^2)."""
    kh, kw = taps.shape
    ai, aj = anchor
    out = np.zeros_like(image, dtype=float)
    for i in range(kh):
        for j in range(kw):
            out += taps[i, j] * np.roll(np.roll(image, i - ai, axis=0), j - aj, axis=1)
    return out


def central_diff(fn, x, h=1e-6):
    """Dense central-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for k in range(flat.size):
        keep = flat[k]
        flat[k] = keep + h
        fp = fn(x)
        flat[k] = keep - h
        fm = fn(x)
        flat[k] = keep
        gf[k] = (fp - fm) / (2.0 * h)
    return g


def directional_diff(fn, x, d, h=1e-6):
    """Central difference of t -> fn(x + t d) at t = 0."""
    return (fn(x + h * d) - fn(x - h * d)) / (2.0 * h)

"""Vectorized safeguarded root finding on brackets.

The agent solver needs thousands of scalar root solves per economy; doing them
as elementwise array iterations keeps everything in numpy. The hybrid below
runs a few bisection rounds to shrink the bracket, then safeguarded secant
steps until the bracket collapses to floating-point width.
"""

import numpy as np


def bracketed_root(f, lo, hi, *, bisect_iters=12, max_iters=120, rtol=1e-15):
    """Find elementwise roots of f on [lo, hi].

    f maps a float array to a float array. f(lo) and f(hi) must differ in sign
    (or be zero) at every element. Returns an array of roots accurate to
    ~rtol * scale.
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    fa = np.asarray(f(a), dtype=float).copy()
    fb = np.asarray(f(b), dtype=float).copy()
    bad = (fa * fb > 0) & (b > a)
    if np.any(bad):
        raise ValueError("root not bracketed at %d elements" % int(np.sum(bad)))

    for _ in range(bisect_iters):
        mid = 0.5 * (a + b)
        fm = np.asarray(f(mid), dtype=float)
        left = fa * fm <= 0
        b = np.where(left, mid, b)
        fb = np.where(left, fm, fb)
        a = np.where(left, a, mid)
        fa = np.where(left, fa, fm)

    for _ in range(max_iters):
        scale = np.maximum(np.abs(a), np.abs(b)) + 1e-300
        done = (b - a) <= rtol * scale
        if np.all(done):
            break
        denom = fb - fa
        safe = np.abs(denom) > 0
        sec = np.where(safe, a - fa * (b - a) / np.where(safe, denom, 1.0),
                       0.5 * (a + b))
        # fall back to bisection when the secant step leaves the bracket
        inside = (sec > a) & (sec < b)
        x = np.where(inside, sec, 0.5 * (a + b))
        x = np.where(done, a, x)
        fx = np.asarray(f(x), dtype=float)
        left = fa * fx <= 0
        b = np.where(done, b, np.where(left, x, b))
        fb = np.where(done, fb, np.where(left, fx, fb))
        a = np.where(done, a, np.where(left, a, x))
        fa = np.where(done, fa, np.where(left, fa, fx))

    out = np.where(np.abs(fa) <= np.abs(fb), a, b)
    return out


def expand_bracket_down(f, lo, hi, floor, tries=60):
    """Halve lo toward floor until f(lo) and f(hi) straddle zero."""
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float)
    fhi = np.asarray(f(hi), dtype=float)
    for _ in range(tries):
        flo = np.asarray(f(lo), dtype=float)
        need = flo * fhi > 0
        if not np.any(need):
            break
        lo = np.where(need, np.maximum(floor, 0.5 * lo), lo)
    return lo

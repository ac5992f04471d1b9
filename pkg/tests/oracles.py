"""Independent reference computations for the test suite.

Exact results come from fractions.Fraction where sizes permit; bulk checks
use compensated double-double accumulation (error-free transformations),
which carries roughly 2x53 bits and is evaluated through a different code
path than the library kernels it certifies.
"""

import math
from fractions import Fraction

import numpy as np
from numba import njit

from jhsvd._fp import NJIT_OPTS, dd_abs, dd_add, dd_div, dd_sub, two_prod


@njit(**NJIT_OPTS)
def dd_sumsq_prescaled(x, e_shift):
    """Double-double sum of (2**e_shift * x_i)**2 in index order."""
    sh, sl = 0.0, 0.0
    for i in range(x.shape[0]):
        v = math.ldexp(x[i], e_shift)
        ph, pl = two_prod(v, v)
        sh, sl = dd_add(sh, sl, ph, pl)
    return sh, sl


@njit(**NJIT_OPTS)
def sumsq_relative_error(x, scale_exp, value):
    """Relative deviation of value * 2**scale_exp from the double-double
    sum of squares of x (computed under a max-exponent prescaling)."""
    big = 0.0
    for i in range(x.shape[0]):
        a = abs(x[i])
        if a > big:
            big = a
    if big == 0.0:
        return 0.0 if value == 0.0 else math.inf
    _, e = math.frexp(big)
    sh, sl = dd_sumsq_prescaled(x, -e)
    got = math.ldexp(value, int(scale_exp) - 2 * e)
    dh, dl = dd_sub(got, 0.0, sh, sl)
    dh, dl = dd_abs(dh, dl)
    rh, _ = dd_div(dh, dl, sh, sl)
    return rh


@njit(**NJIT_OPTS)
def dd_dot(x, y):
    sh, sl = 0.0, 0.0
    for i in range(x.shape[0]):
        ph, pl = two_prod(x[i], y[i])
        sh, sl = dd_add(sh, sl, ph, pl)
    return sh, sl


def exact_dot(x, y) -> Fraction:
    return sum((Fraction(a) * Fraction(b) for a, b in zip(x, y)), Fraction(0))


def exact_sumsq(x) -> Fraction:
    return sum((Fraction(a) ** 2 for a in x), Fraction(0))


def frac_sqrt_bounds(f: Fraction, bits: int = 200) -> tuple[Fraction, Fraction]:
    """Enclosing interval of sqrt(f) with about `bits` bits of accuracy."""
    if f == 0:
        return Fraction(0), Fraction(0)
    p, q = f.numerator, f.denominator
    lo = Fraction(math.isqrt(p), math.isqrt(q) + 1)
    hi = Fraction(math.isqrt(p) + 1, max(math.isqrt(q), 1))
    for _ in range(bits):
        mid = (lo + hi) / 2
        if mid * mid <= f:
            lo = mid
        else:
            hi = mid
    return lo, hi


def matmul_entry_errors(a, v, out) -> float:
    """max over entries of |out - a@v| / (||a_row|| * ||v_col||), exactly."""
    m, c = a.shape
    worst = 0.0
    for j in range(v.shape[1]):
        for i in range(m):
            exact = exact_dot(a[i, :], v[:, j])
            err = abs(Fraction(out[i, j]) - exact)
            scale = float(np.linalg.norm(a[i, :]) * np.linalg.norm(v[:, j]))
            if scale == 0.0:
                worst = max(worst, float(err))
            else:
                worst = max(worst, float(err) / scale)
    return worst

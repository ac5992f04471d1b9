"""Overflow/underflow-proof sums of squares and 2-norms.

A sum of squares is carried as a pair (scale_exp, value) representing
value * 2**scale_exp with scale_exp even, so vectors whose entries square
far outside the double range still produce meaningful results.  The
computation follows a parallel-reduction layout: fixed-size leaf chunks are
accumulated sequentially and combined along a fixed binary tree, which makes
the result independent of how many workers evaluate the leaves.

When the entries provably stay inside the safe range, a plain fused
multiply-add reduction is used; otherwise entries are split into too-small /
in-range / too-large partitions, each scaled by an exact power of two, and
the partial sums are recombined smallest first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._fp import (
    NJIT_OPTS,
    dd_div,
    dd_mul,
    dd_round_toward_zero,
    dd_round_up,
    dd_sqrt,
    fma,
)

#: smallest positive normalized double
MU = math.ldexp(1.0, -1022)
#: largest finite double
NU = math.ldexp(2.0 - 2.0 ** -52, 1022)
#: unit roundoff for round-to-nearest
EPS = 2.0 ** -53
GAMMA = 1.0 - EPS
DELTA = 1.0 + EPS

#: elements per reduction-tree leaf; part of the result's definition
DEFAULT_CHUNK = 256


@dataclass(frozen=True)
class FpParams:
    mu: float = MU
    nu: float = NU
    eps: float = EPS
    gamma: float = GAMMA
    delta: float = DELTA


@dataclass(frozen=True)
class ScaledSquare:
    """A sum of squares value * 2**scale_exp; common form keeps
    0.5 <= value < 2 with scale_exp even (zero is (0, 0.0))."""

    scale_exp: int
    value: float

    def to_float(self) -> float:
        return math.ldexp(self.value, self.scale_exp)


ZERO = ScaledSquare(0, 0.0)


@njit(**NJIT_OPTS)
def _reduction_depth(n):
    # depth bound of the reduction tree; at least 1 since the squaring
    # itself already rounds once
    d = 0
    m = n - 1
    while m > 0:
        m >>= 1
        d += 1
    return max(d, 1)


def reduction_depth(n: int) -> int:
    """Tree-depth bound entering the safety margin delta_n."""
    if n < 1:
        raise ValueError("vector length must be at least 1")
    return _reduction_depth(n)


@njit(**NJIT_OPTS)
def _safe_bounds(n):
    d = _reduction_depth(n)
    mu_tilde = dd_round_up(*dd_sqrt(*dd_div(MU, 0.0, GAMMA, 0.0)))
    # delta_n = 2**d * (1 + eps)**(d + 1), evaluated in double-double
    dh, dl = 1.0, 0.0
    for _ in range(d + 1):
        dh, dl = dd_mul(dh, dl, DELTA, 0.0)
    dh = math.ldexp(dh, d)
    dl = math.ldexp(dl, d)
    nu_hat = dd_round_toward_zero(*dd_sqrt(*dd_div(NU, 0.0, dh, dl)))
    return mu_tilde, nu_hat


def safe_bounds(n: int) -> tuple[float, float]:
    """Inclusive magnitude bounds [mu_tilde, nu_hat] within which squaring
    and tree-summing n values can neither underflow nor overflow.

    mu_tilde = sqrt(mu/gamma) rounded up, nu_hat = sqrt(nu/delta_n) rounded
    toward zero; both directions are the conservative ones.
    """
    if n < 1:
        raise ValueError("vector length must be at least 1")
    return _safe_bounds(n)


@njit(**NJIT_OPTS)
def _scale_exponent(f, t, up):
    fy, fe = math.frexp(f)
    ty, te = math.frexp(t)
    if up:
        return (te - fe) + (1 if fy < ty else 0)
    return (te - fe) - (1 if fy > ty else 0)


def scale_exponent(f: float, t: float, direction: str) -> int:
    """Exponent j of the power-of-two scale relating f to the threshold t.

    direction 'up': smallest j with 2**j * f >= t.
    direction 'down': largest j with 2**j * f <= t.
    """
    if not (f > 0.0 and t > 0.0 and math.isfinite(f) and math.isfinite(t)):
        raise ValueError("scale_exponent needs positive finite inputs")
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    return _scale_exponent(f, t, direction == "up")


@njit(**NJIT_OPTS)
def _common_form(j, v):
    # exact renormalization to 0.5 <= v < 2 with even scale exponent
    if v == 0.0:
        return 0, 0.0
    fy, fe = math.frexp(v)  # v = fy * 2**fe, 0.5 <= fy < 1
    y = 2.0 * fy
    m = fe - 1
    m_prime = -1 if m % 2 != 0 else 0
    return j + m - m_prime, math.ldexp(y, m_prime)


@njit(**NJIT_OPTS)
def _add_scaled(ja, va, jb, vb):
    # both addends in common form; result not re-normalized
    if va == 0.0:
        return jb, vb
    if vb == 0.0:
        return ja, va
    if (ja, va) <= (jb, vb):
        js, vs, jbig, vbig = ja, va, jb, vb
    else:
        js, vs, jbig, vbig = jb, vb, ja, va
    shifted = math.ldexp(vs, js - jbig)
    return jbig, shifted + vbig


def common_form(s: ScaledSquare) -> ScaledSquare:
    """Rescale to 0.5 <= value < 2 with an even scale exponent; exact."""
    if s.value < 0.0 or not math.isfinite(s.value):
        raise ValueError(f"scaled square value {s.value} is not a finite nonneg real")
    j, v = _common_form(s.scale_exp, s.value)
    return ScaledSquare(j, v)


def add_scaled(a: ScaledSquare, b: ScaledSquare) -> ScaledSquare:
    """Add two common-form scaled squares; the smaller addend is rescaled
    exactly to the larger one's scale.  Result is not re-normalized."""
    j, v = _add_scaled(a.scale_exp, a.value, b.scale_exp, b.value)
    return ScaledSquare(j, v)


# ---------------------------------------------------------------------------
# Reduction kernels.


@njit(**NJIT_OPTS)
def _tree_combine(partials):
    k = partials.shape[0]
    while k > 1:
        half = (k + 1) // 2
        for i in range(k // 2):
            partials[i] = partials[2 * i] + partials[2 * i + 1]
        if k % 2:
            partials[half - 1] = partials[k - 1]
        k = half
    return partials[0]


@njit(**NJIT_OPTS)
def _tree_sumsq_plain(x, chunk):
    n = x.shape[0]
    nleaf = (n + chunk - 1) // chunk
    partials = np.zeros(nleaf)
    for c in range(nleaf):
        acc = 0.0
        end = min((c + 1) * chunk, n)
        for i in range(c * chunk, end):
            acc = fma(x[i], x[i], acc)
        partials[c] = acc
    return _tree_combine(partials)


@njit(**NJIT_OPTS)
def _tree_sumsq_selected(x, lo, hi, j, chunk):
    # sum of (2**j * x_i)**2 over entries with lo <= |x_i| <= hi, |x_i| > 0
    n = x.shape[0]
    nleaf = (n + chunk - 1) // chunk
    partials = np.zeros(nleaf)
    for c in range(nleaf):
        acc = 0.0
        end = min((c + 1) * chunk, n)
        for i in range(c * chunk, end):
            a = abs(x[i])
            if a > 0.0 and lo <= a <= hi:
                v = math.ldexp(x[i], j)
                acc = fma(v, v, acc)
        partials[c] = acc
    return _tree_combine(partials)


@njit(**NJIT_OPTS)
def _abs_min_max(x):
    big = 0.0
    small = NU  # zero entries count as NU when searching for the minimum
    for i in range(x.shape[0]):
        a = abs(x[i])
        if a > big:
            big = a
        if 0.0 < a < small:
            small = a
    return small, big


@njit(**NJIT_OPTS)
def _sum_squares_core(x, chunk, force_scaled):
    """(scale_exp, value) in common form; (0, 0.0) for a zero vector."""
    if x.shape[0] == 0:
        return 0, 0.0
    m, big = _abs_min_max(x)
    if big == 0.0:
        return 0, 0.0

    if not force_scaled:
        plain = _tree_sumsq_plain(x, chunk)
        if math.isfinite(plain) and m * m >= MU:
            return _common_form(0, plain)

    mu_tilde, nu_hat = _safe_bounds(x.shape[0])
    # up to three partial sums, in (scale_exp, value) form
    js = np.zeros(3, dtype=np.int64)
    vs = np.zeros(3)
    count = 0
    if m <= nu_hat and big >= mu_tilde:
        s1 = _tree_sumsq_selected(x, mu_tilde, nu_hat, 0, chunk)
        if s1 != 0.0:
            js[count], vs[count] = _common_form(0, s1)
            count += 1
    if big > nu_hat:
        j2 = _scale_exponent(big, nu_hat, False)
        s2 = _tree_sumsq_selected(x, math.nextafter(nu_hat, NU), NU, j2, chunk)
        if s2 != 0.0:
            js[count], vs[count] = _common_form(-2 * j2, s2)
            count += 1
    if m < mu_tilde:
        j0 = _scale_exponent(m, mu_tilde, True)
        s0 = _tree_sumsq_selected(x, 0.0, math.nextafter(mu_tilde, 0.0), j0, chunk)
        if s0 != 0.0:
            js[count], vs[count] = _common_form(-2 * j0, s0)
            count += 1

    if count == 0:
        return 0, 0.0
    # accumulate in nondecreasing magnitude order; common form makes the
    # (scale_exp, value) comparison the magnitude order
    for a in range(count - 1):
        for b in range(a + 1, count):
            if js[a] > js[b] or (js[a] == js[b] and vs[a] > vs[b]):
                js[a], js[b] = js[b], js[a]
                vs[a], vs[b] = vs[b], vs[a]
    ja, va = js[0], vs[0]
    for k in range(1, count):
        ja, va = _common_form(ja, va)
        ja, va = _add_scaled(ja, va, js[k], vs[k])
    return _common_form(ja, va)


@njit(**NJIT_OPTS)
def _norm2_core(x, chunk, force_scaled):
    j, v = _sum_squares_core(x, chunk, force_scaled)
    if v == 0.0:
        return 0, 0.0
    return -(j // 2), math.sqrt(v)


@njit(**NJIT_OPTS)
def norm2_unscaled(x):
    """Robust 2-norm collapsed to a double; inf only if the true norm
    overflows.  For use inside other compiled kernels."""
    j, sigma = _norm2_core(x, DEFAULT_CHUNK, False)
    return math.ldexp(sigma, -j)


# ---------------------------------------------------------------------------
# Python-facing wrappers.


def _as_vector(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a one-dimensional vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("input vector contains NaN or infinity")
    return x


def sum_squares(x, chunk: int = DEFAULT_CHUNK, force_scaled: bool = False) -> ScaledSquare:
    """Sum of squares of a vector of finite doubles as a common-form
    ScaledSquare.  force_scaled skips the plain fast path (for testing)."""
    j, v = _sum_squares_core(_as_vector(x), chunk, force_scaled)
    return ScaledSquare(int(j), v)


def norm2(x, chunk: int = DEFAULT_CHUNK, force_scaled: bool = False) -> tuple[int, float]:
    """2-norm as (scale exponent js, sigma) with ||x|| = sigma / 2**js."""
    j, sigma = _norm2_core(_as_vector(x), chunk, force_scaled)
    return int(j), sigma


def norm2_value(x, chunk: int = DEFAULT_CHUNK, force_scaled: bool = False) -> float:
    """The 2-norm collapsed to a double (inf if it exceeds the range)."""
    js, sigma = norm2(x, chunk=chunk, force_scaled=force_scaled)
    return math.ldexp(sigma, -js)

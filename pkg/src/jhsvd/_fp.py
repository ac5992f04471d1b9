"""Scalar floating-point building blocks shared by the compiled kernels.

Everything here is numba-compiled and operates on float64 only.  The two
ingredients the rest of the package relies on:

* a correctly rounded fused multiply-add (``fma``), lowered to the LLVM
  ``llvm.fma.f64`` intrinsic (hardware FMA where available, otherwise the
  correctly rounded libm fallback);
* compensated double-double arithmetic built from error-free
  transformations, used for the reference evaluations (roughly 2x53-bit
  effective precision).
"""

import math

from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.extending import intrinsic

NJIT_OPTS = dict(cache=True, nogil=True, fastmath=False)


@intrinsic
def _fma_intrinsic(typingctx, x, y, z):
    sig = types.float64(types.float64, types.float64, types.float64)

    def codegen(context, builder, signature, args):
        fnty = ir.FunctionType(ir.DoubleType(), [ir.DoubleType()] * 3)
        fn = cgutils.get_or_insert_function(builder.module, fnty, "llvm.fma.f64")
        return builder.call(fn, args)

    return sig, codegen


@njit(**NJIT_OPTS)
def fma(x, y, z):
    """Return x*y + z with a single rounding."""
    return _fma_intrinsic(x, y, z)


# ---------------------------------------------------------------------------
# Error-free transformations.


@njit(**NJIT_OPTS)
def two_sum(a, b):
    """a + b as (rounded sum, exact residual)."""
    s = a + b
    v = s - a
    e = (a - (s - v)) + (b - v)
    return s, e


@njit(**NJIT_OPTS)
def quick_two_sum(a, b):
    # requires |a| >= |b| (or a == 0)
    s = a + b
    e = b - (s - a)
    return s, e


@njit(**NJIT_OPTS)
def two_prod(a, b):
    """a * b as (rounded product, exact residual)."""
    p = a * b
    e = fma(a, b, -p)
    return p, e


# ---------------------------------------------------------------------------
# Double-double arithmetic on (hi, lo) pairs with |lo| <= ulp(hi)/2.


@njit(**NJIT_OPTS)
def dd_add(ah, al, bh, bl):
    s1, s2 = two_sum(ah, bh)
    t1, t2 = two_sum(al, bl)
    s2 += t1
    s1, s2 = quick_two_sum(s1, s2)
    s2 += t2
    return quick_two_sum(s1, s2)


@njit(**NJIT_OPTS)
def dd_sub(ah, al, bh, bl):
    return dd_add(ah, al, -bh, -bl)


@njit(**NJIT_OPTS)
def dd_add_d(ah, al, b):
    s1, s2 = two_sum(ah, b)
    s2 += al
    return quick_two_sum(s1, s2)


@njit(**NJIT_OPTS)
def dd_mul(ah, al, bh, bl):
    p1, p2 = two_prod(ah, bh)
    p2 += ah * bl + al * bh
    return quick_two_sum(p1, p2)


@njit(**NJIT_OPTS)
def dd_mul_d(ah, al, b):
    p1, p2 = two_prod(ah, b)
    p2 += al * b
    return quick_two_sum(p1, p2)


@njit(**NJIT_OPTS)
def dd_div(ah, al, bh, bl):
    q1 = ah / bh
    rh, rl = dd_sub(ah, al, *dd_mul_d(bh, bl, q1))
    q2 = rh / bh
    rh, rl = dd_sub(rh, rl, *dd_mul_d(bh, bl, q2))
    q3 = rh / bh
    q1, q2 = quick_two_sum(q1, q2)
    return dd_add_d(q1, q2, q3)


@njit(**NJIT_OPTS)
def dd_sqrt(ah, al):
    if ah == 0.0:
        return 0.0, 0.0
    s = math.sqrt(ah)
    ph, pl = two_prod(s, s)
    rh, _ = dd_sub(ah, al, ph, pl)
    e = rh / (2.0 * s)
    return quick_two_sum(s, e)


@njit(**NJIT_OPTS)
def dd_abs(ah, al):
    if ah < 0.0 or (ah == 0.0 and al < 0.0):
        return -ah, -al
    return ah, al


# ---------------------------------------------------------------------------
# Directed rounding of a double-double value to a single double.


@njit(**NJIT_OPTS)
def dd_round_up(ah, al):
    """Smallest double >= the value represented by (ah, al)."""
    if al > 0.0:
        return math.nextafter(ah, math.inf)
    return ah


@njit(**NJIT_OPTS)
def dd_round_toward_zero(ah, al):
    """Double obtained by truncating (ah, al) toward zero (ah > 0 assumed)."""
    if al < 0.0:
        return math.nextafter(ah, 0.0)
    return ah

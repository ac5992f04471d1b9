"""Guarded trigonometric and hyperbolic Jacobi rotation parameters.

Given the 2x2 pivot Gram data (h_pp, h_qq, h_pq), the rotation is computed
through the cotangent of the double angle:

    h    = h_qq - t*h_pp,  ct2 = t * h / (2*h_pq)      (t = +1 trig, -1 hyp)
    |ct| = |ct2| + sqrt(fma(ct2, ct2, t))
    tn   = sgn(ct2) / |ct|
    cs   = |ct| / sqrt(fma(|ct|, |ct|, t))

with every operation correctly rounded (fused multiply-adds round once).
Guards: a hyperbolic |ct2| that rounds to exactly 1 is replaced by 5/4; a
trigonometric |ct2| below sqrt(eps) collapses the square root to 1; any
|ct2| >= sqrt(2/eps) yields |ct| = 2*|ct2| and cs = 1, avoiding both the
square roots and the overflow of ct2**2.

The departure helpers measure how far a computed rotation sits from the
(J-)orthogonal ideal, evaluated in double-double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._fp import (
    NJIT_OPTS,
    dd_add,
    dd_add_d,
    dd_mul,
    dd_sub,
    fma,
    two_prod,
)

TRIG = "trig"
HYPERBOLIC = "hyp"

#: sqrt(2/eps) for eps = 2**-53; exactly representable
_CT2_HUGE = 2.0 ** 27
#: sqrt(eps)
_CT2_TINY = math.sqrt(2.0 ** -53)


class HyperbolicDomainError(ArithmeticError):
    """|coth 2phi| < 1: the pivot pair lost J-definiteness upstream."""


@dataclass(frozen=True)
class PivotGram:
    """Entries of the 2x2 pivot Gram matrix (column norms squared and the
    cross product)."""

    h_pp: float
    h_qq: float
    h_pq: float


@dataclass(frozen=True)
class RotationParams:
    kind: str            # TRIG or HYPERBOLIC
    cs: float            # cos(phi) or cosh(phi)
    tn: float            # tan(phi) or tanh(phi)
    proper: bool         # cs != 1: the rotation changes column scales
    swap: bool = False   # sorting permutation applied after the rotation


@njit(**NJIT_OPTS)
def _params_from_ct2(ct2, t):
    """(cs1, cs2, tn) from the double-angle cotangent; t is +-1.0."""
    a = abs(ct2)
    sgn = 1.0 if ct2 >= 0.0 else -1.0
    if a >= _CT2_HUGE:
        ct = 2.0 * a
        tn = sgn / ct
        return 1.0, 1.0, tn
    if t > 0.0 and a < _CT2_TINY:
        ct = a + 1.0
    else:
        ct = a + math.sqrt(fma(ct2, ct2, t))
    tn = sgn / ct
    cs1 = 1.0 / math.sqrt(fma(t * tn, tn, 1.0))
    cs2 = ct / math.sqrt(fma(ct, ct, t))
    return cs1, cs2, tn


@njit(**NJIT_OPTS)
def _rotation_core(h_pp, h_qq, h_pq, t):
    """(cs, tn, ok) with the production cs2 formula; ok=False flags a
    hyperbolic pair whose |coth 2phi| came out below 1."""
    h = h_qq - t * h_pp
    ct2 = t * (h / (2.0 * h_pq))
    if t < 0.0:
        if abs(ct2) == 1.0:
            ct2 = 1.25 if ct2 > 0.0 else -1.25
        elif abs(ct2) < 1.0:
            return 0.0, 0.0, False
    cs1, cs2, tn = _params_from_ct2(ct2, t)
    return cs2, tn, True


def compute_rotation(g: PivotGram, kind: str) -> RotationParams:
    """Rotation parameters diagonalizing the 2x2 pivot Gram matrix.

    The caller is expected to have skipped relatively orthogonal pairs, so
    h_pq must be nonzero; h_pp and h_qq must be positive (full rank).
    """
    if not (g.h_pp > 0.0 and g.h_qq > 0.0):
        raise ValueError("pivot Gram diagonal must be positive")
    if g.h_pq == 0.0:
        raise ValueError("h_pq is zero; the pair is already orthogonal")
    if kind not in (TRIG, HYPERBOLIC):
        raise ValueError(f"kind must be {TRIG!r} or {HYPERBOLIC!r}")
    t = 1.0 if kind == TRIG else -1.0
    cs, tn, ok = _rotation_core(g.h_pp, g.h_qq, g.h_pq, t)
    if not ok:
        raise HyperbolicDomainError(
            "hyperbolic pivot with |coth 2phi| < 1; "
            "J-definiteness was lost upstream"
        )
    return RotationParams(kind=kind, cs=cs, tn=tn, proper=(cs != 1.0))


@njit(**NJIT_OPTS)
def _departure_trig(cs, tn):
    # d = |(cos^2 + sin^2) - 1| with sin = cs * tn, in double-double
    sh, sl = two_prod(cs, tn)
    c2h, c2l = two_prod(cs, cs)
    s2h, s2l = dd_mul(sh, sl, sh, sl)
    th, tl = dd_add(c2h, c2l, s2h, s2l)
    dh, _ = dd_add_d(th, tl, -1.0)
    return abs(dh)


@njit(**NJIT_OPTS)
def _departure_hyp(cs, tn):
    # d = |(cosh - sinh)(cosh + sinh) - 1| with sinh = cs * tn
    sh, sl = two_prod(cs, tn)
    ah, al = dd_sub(cs, 0.0, sh, sl)
    bh, bl = dd_add_d(sh, sl, cs)
    ph, pl = dd_mul(ah, al, bh, bl)
    dh, _ = dd_add_d(ph, pl, -1.0)
    return abs(dh)


def departure(params: RotationParams) -> float:
    """Departure from (J-)orthogonality of one rotation, evaluated in
    double-double precision."""
    if params.kind == TRIG:
        return _departure_trig(params.cs, params.tn)
    return _departure_hyp(params.cs, params.tn)


# ---------------------------------------------------------------------------
# Departure survey across the exponent range of |ct 2phi|.


@njit(**NJIT_OPTS)
def _survey_exponent(ct2_values, t):
    """Sums of departures for the cs1 and cs2 formula variants over one
    batch of |ct 2phi| samples; hyperbolic samples below 1 are skipped."""
    sum1 = 0.0
    sum2 = 0.0
    nvalid = 0
    for i in range(ct2_values.shape[0]):
        ct2 = ct2_values[i]
        if t < 0.0:
            if ct2 == 1.0:
                ct2 = 1.25
            elif ct2 < 1.0:
                continue
        cs1, cs2, tn = _params_from_ct2(ct2, t)
        if t > 0.0:
            sum1 += _departure_trig(cs1, tn)
            sum2 += _departure_trig(cs2, tn)
        else:
            sum1 += _departure_hyp(cs1, tn)
            sum2 += _departure_hyp(cs2, tn)
        nvalid += 1
    return sum1, sum2, nvalid


@dataclass(frozen=True)
class SurveyRow:
    exponent: int
    samples: int
    mean_cs1: float
    mean_cs2: float


@dataclass(frozen=True)
class SurveyResult:
    kind: str
    rows: tuple[SurveyRow, ...]
    mean_cs1: float  # over all valid samples
    mean_cs2: float


def departure_survey(
    kind: str,
    exponent_range: tuple[int, int] = (-53, 53),
    samples_per_exponent: int = 1 << 16,
    seed: int = 0,
) -> SurveyResult:
    """Mean departures of the cs1/cs2 rotation formulas.

    For each binary exponent e in the (inclusive) range, uniform 52-bit
    significands m are drawn and |ct 2phi| = (1 + m*2**-52) * 2**e formed;
    rotations are computed in double precision and their departures in
    double-double.  Hyperbolic samples with |ct 2phi| < 1 lie outside the
    rotation domain and are skipped (whole negative exponents contribute
    nothing).  Deterministic for a fixed seed.
    """
    if kind not in (TRIG, HYPERBOLIC):
        raise ValueError(f"kind must be {TRIG!r} or {HYPERBOLIC!r}")
    lo, hi = exponent_range
    if lo > hi:
        raise ValueError("empty exponent range")
    if samples_per_exponent < 1:
        raise ValueError("need at least one sample per exponent")
    t = 1.0 if kind == TRIG else -1.0
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []
    total1 = total2 = 0.0
    total_n = 0
    for e in range(lo, hi + 1):
        m = rng.integers(0, 1 << 52, size=samples_per_exponent, dtype=np.uint64)
        ct2 = np.ldexp(1.0 + m.astype(np.float64) * 2.0 ** -52, e)
        s1, s2, nvalid = _survey_exponent(ct2, t)
        mean1 = s1 / nvalid if nvalid else math.nan
        mean2 = s2 / nvalid if nvalid else math.nan
        rows.append(SurveyRow(e, nvalid, mean1, mean2))
        total1 += s1
        total2 += s2
        total_n += nvalid
    return SurveyResult(
        kind=kind,
        rows=tuple(rows),
        mean_cs1=total1 / total_n,
        mean_cs2=total2 / total_n,
    )
